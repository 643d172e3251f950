#include "app.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cdhmm/errors.hpp"
#include "cdhmm/ghosting.hpp"
#include "cdhmm/inference.hpp"
#include "cdhmm/metrics.hpp"
#include "cdhmm/model_io.hpp"
#include "cdhmm/synthgen.hpp"
#include "cdhmm/tracking_data.hpp"
#include "cdhmm/training.hpp"
#include "report.hpp"

namespace cdhmm::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

struct RunConfig {
  std::string command;
  std::vector<std::string> inputs;
  std::vector<std::string> models;
  std::string out = "out";
  std::string config_path;
  std::optional<std::string> team;
  std::optional<std::string> delivery;
  std::uint64_t seed = 0;
  int verbosity = 1;
  bool permissive = false;

  train::EmConfig em;
  ghost::GhostConfig ghost;
  std::string reception_model;
  std::vector<double> sweep_tau;
  std::vector<double> sweep_theta;

  metrics::ProfileOptions profile;

  std::size_t sens_step = 10;
  std::size_t sens_seeds = 10;
  std::size_t sens_max = 0;

  bool estimate_velocities = false;
  std::size_t velocity_window = 3;
  bool truncate = false;

  bool include_gamma = true;

  std::size_t synth_count = 100;
  std::size_t synth_attackers = 10;
  std::size_t synth_frames = 75;
  std::size_t synth_delivery = 25;
  double synth_sigma2 = 0.25;
  double synth_zone_variance = 1.0;
  double synth_gamma_o = 0.8;
  double synth_zonal_initial = 0.5;
  std::string synth_motion = "ou";
  std::string synth_prefix = "syn";
};

// ---- config overlay -------------------------------------------------------

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError("config: '" + where + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ValidationError("config: unknown key '" + k + "' in " + where);
  }
}

std::vector<std::string> string_list(const json& j) {
  if (j.is_string()) return {j.get<std::string>()};
  return j.get<std::vector<std::string>>();
}

ghost::OccupancySource occupancy_from_string(const std::string& s) {
  if (s == "smoothed") return ghost::OccupancySource::Smoothed;
  if (s == "filtered") return ghost::OccupancySource::Filtered;
  throw ValidationError("occupancy must be 'smoothed' or 'filtered', got '" + s + "'");
}

std::string to_string(ghost::OccupancySource s) {
  return s == ghost::OccupancySource::Smoothed ? "smoothed" : "filtered";
}

void apply_config(RunConfig& c, const json& j) {
  reject_unknown(j,
                 {"input", "model", "out", "team", "delivery", "seed", "verbosity", "permissive", "em", "ghost",
                  "metrics", "sensitivity", "ingest", "decode", "synth"},
                 "config");
  if (j.contains("input")) c.inputs = string_list(j["input"]);
  if (j.contains("model")) c.models = string_list(j["model"]);
  if (j.contains("out")) c.out = j["out"].get<std::string>();
  if (j.contains("team")) c.team = j["team"].get<std::string>();
  if (j.contains("delivery")) c.delivery = j["delivery"].get<std::string>();
  if (j.contains("seed")) {
    c.seed = j["seed"].get<std::uint64_t>();
    c.em.seed = c.seed;
    c.ghost.seed = c.seed;
  }
  if (j.contains("verbosity")) c.verbosity = j["verbosity"].get<int>();
  if (j.contains("permissive")) c.permissive = j["permissive"].get<bool>();
  if (j.contains("em")) c.em = io::em_config_from_json(j["em"], c.em);
  if (j.contains("ghost")) {
    const auto& g = j["ghost"];
    reject_unknown(g, {"mc_samples", "tau", "theta", "occupancy", "seed", "all_frames", "reception_model",
                       "sweep_tau", "sweep_theta"},
                   "ghost");
    c.ghost.mc_samples = g.value("mc_samples", c.ghost.mc_samples);
    c.ghost.tau = g.value("tau", c.ghost.tau);
    c.ghost.theta = g.value("theta", c.ghost.theta);
    if (g.contains("occupancy")) c.ghost.occupancy = occupancy_from_string(g["occupancy"].get<std::string>());
    c.ghost.seed = g.value("seed", c.ghost.seed);
    c.ghost.all_frames = g.value("all_frames", c.ghost.all_frames);
    c.reception_model = g.value("reception_model", c.reception_model);
    if (g.contains("sweep_tau")) c.sweep_tau = g["sweep_tau"].get<std::vector<double>>();
    if (g.contains("sweep_theta")) c.sweep_theta = g["sweep_theta"].get<std::vector<double>>();
  }
  if (j.contains("metrics")) {
    const auto& m = j["metrics"];
    reject_unknown(m, {"min_sequences", "soft", "include_zonal_entry"}, "metrics");
    c.profile.min_sequences = m.value("min_sequences", c.profile.min_sequences);
    c.profile.soft = m.value("soft", c.profile.soft);
    c.profile.include_zonal_entry = m.value("include_zonal_entry", c.profile.include_zonal_entry);
  }
  if (j.contains("sensitivity")) {
    const auto& s = j["sensitivity"];
    reject_unknown(s, {"step", "seeds", "max_size"}, "sensitivity");
    c.sens_step = s.value("step", c.sens_step);
    c.sens_seeds = s.value("seeds", c.sens_seeds);
    c.sens_max = s.value("max_size", c.sens_max);
  }
  if (j.contains("ingest")) {
    const auto& s = j["ingest"];
    reject_unknown(s, {"estimate_velocities", "velocity_window", "truncate"}, "ingest");
    c.estimate_velocities = s.value("estimate_velocities", c.estimate_velocities);
    c.velocity_window = s.value("velocity_window", c.velocity_window);
    c.truncate = s.value("truncate", c.truncate);
  }
  if (j.contains("decode")) {
    const auto& s = j["decode"];
    reject_unknown(s, {"gamma"}, "decode");
    c.include_gamma = s.value("gamma", c.include_gamma);
  }
  if (j.contains("synth")) {
    const auto& s = j["synth"];
    reject_unknown(s, {"count", "attackers", "frames", "delivery_frame", "marking_sigma2", "zone_variance", "gamma_o",
                       "zonal_initial", "motion", "prefix"},
                   "synth");
    c.synth_count = s.value("count", c.synth_count);
    c.synth_attackers = s.value("attackers", c.synth_attackers);
    c.synth_frames = s.value("frames", c.synth_frames);
    c.synth_delivery = s.value("delivery_frame", c.synth_delivery);
    c.synth_sigma2 = s.value("marking_sigma2", c.synth_sigma2);
    c.synth_zone_variance = s.value("zone_variance", c.synth_zone_variance);
    c.synth_gamma_o = s.value("gamma_o", c.synth_gamma_o);
    c.synth_zonal_initial = s.value("zonal_initial", c.synth_zonal_initial);
    c.synth_motion = s.value("motion", c.synth_motion);
    c.synth_prefix = s.value("prefix", c.synth_prefix);
  }
}

/// Effective configuration for the manifest. Output locations are left out so
/// reruns into different directories produce the same manifest.
ojson config_json(const RunConfig& c) {
  ojson j;
  j["command"] = c.command;
  j["team"] = c.team ? ojson(*c.team) : ojson(nullptr);
  j["delivery"] = c.delivery ? ojson(*c.delivery) : ojson(nullptr);
  j["seed"] = c.seed;
  j["permissive"] = c.permissive;
  if (c.command == "train" || c.command == "sensitivity") j["em"] = io::em_config_to_json(c.em);
  if (c.command == "ghost") {
    ojson g;
    g["mc_samples"] = c.ghost.mc_samples;
    g["tau"] = c.ghost.tau;
    g["theta"] = c.ghost.theta;
    g["occupancy"] = to_string(c.ghost.occupancy);
    g["seed"] = c.ghost.seed;
    g["all_frames"] = c.ghost.all_frames;
    g["reception_model"] = c.reception_model.empty() ? ojson("reference") : ojson(c.reception_model);
    g["sweep_tau"] = c.sweep_tau;
    g["sweep_theta"] = c.sweep_theta;
    j["ghost"] = g;
  }
  if (c.command == "metrics") {
    j["metrics"] = {{"min_sequences", c.profile.min_sequences},
                    {"soft", c.profile.soft},
                    {"include_zonal_entry", c.profile.include_zonal_entry}};
  }
  if (c.command == "sensitivity") {
    j["sensitivity"] = {{"step", c.sens_step}, {"seeds", c.sens_seeds}, {"max_size", c.sens_max}};
  }
  if (c.command == "ingest") {
    j["ingest"] = {{"estimate_velocities", c.estimate_velocities},
                   {"velocity_window", c.velocity_window},
                   {"truncate", c.truncate}};
  }
  if (c.command == "decode") j["decode"] = {{"gamma", c.include_gamma}};
  if (c.command == "synth") {
    j["synth"] = {{"count", c.synth_count},
                  {"attackers", c.synth_attackers},
                  {"frames", c.synth_frames},
                  {"delivery_frame", c.synth_delivery},
                  {"marking_sigma2", c.synth_sigma2},
                  {"zone_variance", c.synth_zone_variance},
                  {"gamma_o", c.synth_gamma_o},
                  {"zonal_initial", c.synth_zonal_initial},
                  {"motion", c.synth_motion},
                  {"prefix", c.synth_prefix}};
  }
  return j;
}

// ---- shared helpers -------------------------------------------------------

std::string group_stem(const std::string& team, data::DeliveryType d) {
  std::string s;
  for (char ch : team) s += std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' ? ch : '_';
  return s + "_" + data::to_string(d);
}

data::Dataset load_inputs(const RunConfig& c, Manifest& manifest) {
  if (c.inputs.empty()) throw ValidationError("no --input dataset given");
  std::vector<data::CornerSequence> seqs;
  for (const auto& p : c.inputs) {
    manifest.add_input(p);
    auto ds = data::load_dataset(p);
    spdlog::info("loaded {} sequences from {}", ds.size(), p);
    for (const auto& s : ds.sequences()) seqs.push_back(data::canonicalize(s));
  }
  std::set<std::string> ids;
  std::optional<data::DeliveryType> delivery;
  if (c.delivery) delivery = data::delivery_from_string(*c.delivery);
  std::vector<data::CornerSequence> kept;
  for (auto& s : seqs) {
    if (!ids.insert(s.sequence_id).second) throw ValidationError("duplicated sequence_id '" + s.sequence_id + "'");
    data::validate(s);
    if (c.team && s.defending_team_id != *c.team) continue;
    if (delivery && s.delivery_type != *delivery) continue;
    kept.push_back(std::move(s));
  }
  return data::Dataset(std::move(kept));
}

data::Dataset trainable(const RunConfig& c, const data::Dataset& ds) {
  data::FilterOptions f;
  f.strict = !c.permissive;
  return data::filter_for_training(ds, f);
}

struct LoadedModel {
  std::string path;
  io::ModelFile file;
};

std::map<data::Dataset::GroupKey, LoadedModel> load_models(const RunConfig& c, Manifest& manifest) {
  if (c.models.empty()) throw ValidationError("no --model given");
  std::vector<fs::path> files;
  for (const auto& m : c.models) {
    if (fs::is_directory(m)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(m)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.size() > 11 && name.ends_with(".model.json")) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.emplace_back(m);
    }
  }
  std::map<data::Dataset::GroupKey, LoadedModel> out;
  for (const auto& f : files) {
    manifest.add_input(f);
    auto file = io::load_model(f);
    data::Dataset::GroupKey key{file.params.team_id, file.params.delivery_type};
    if (out.count(key)) {
      throw ValidationError("two models for team '" + key.first + "', " + data::to_string(key.second));
    }
    out.emplace(key, LoadedModel{f.generic_string(), std::move(file)});
  }
  if (out.empty()) throw ValidationError("no model files found");
  return out;
}

const hmm::CdhmmParams& model_for(const std::map<data::Dataset::GroupKey, LoadedModel>& models,
                                  const data::CornerSequence& seq) {
  auto it = models.find({seq.defending_team_id, seq.delivery_type});
  if (it == models.end()) {
    throw ValidationError(seq.sequence_id + ": no model for team '" + seq.defending_team_id + "', " +
                          data::to_string(seq.delivery_type) + " deliveries");
  }
  return it->second.file.params;
}

std::vector<hmm::SequenceDecoding> decode_all(const std::map<data::Dataset::GroupKey, LoadedModel>& models,
                                              const data::Dataset& ds) {
  std::vector<hmm::SequenceDecoding> out;
  out.reserve(ds.size());
  for (const auto& seq : ds.sequences()) out.push_back(hmm::decode_sequence(model_for(models, seq), seq));
  return out;
}

ojson vec(const Vec2& v) { return ojson::array({v.x(), v.y()}); }

ojson opt(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

std::string opt_csv(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

// ---- commands -------------------------------------------------------------

void cmd_ingest(const RunConfig& c) {
  Manifest manifest("ingest", c.out);
  if (c.inputs.empty()) throw ValidationError("no --input dataset given");
  std::vector<data::CornerSequence> seqs;
  std::set<std::string> ids;
  for (const auto& p : c.inputs) {
    manifest.add_input(p);
    const auto loaded = data::load_dataset(p);
    for (const auto& raw : loaded.sequences()) {
      if (!ids.insert(raw.sequence_id).second) {
        throw ValidationError("duplicated sequence_id '" + raw.sequence_id + "'");
      }
      auto s = data::canonicalize(raw);
      if (c.truncate) s = data::truncate(s);
      if (c.estimate_velocities) s = data::estimate_velocities(s, c.velocity_window);
      data::validate(s);
      seqs.push_back(std::move(s));
    }
  }
  data::Dataset ds(std::move(seqs));
  std::ostringstream text;
  data::write_dataset(ds, text);
  manifest.write_output("dataset.jsonl", text.str());

  data::FilterOptions strict;
  const auto usable = data::filter_for_training(ds, strict);
  ojson summary;
  summary["schema"] = "cdhmm-ingest-summary/1";
  summary["sequences"] = ds.size();
  summary["trainable_strict"] = usable.size();
  std::size_t frames = 0, short_corners = 0, with_contact = 0;
  for (const auto& s : ds.sequences()) {
    frames += s.frame_count();
    short_corners += s.short_corner;
    with_contact += s.first_contact.has_value();
  }
  summary["frames"] = frames;
  summary["short_corners"] = short_corners;
  summary["with_first_contact"] = with_contact;
  ojson groups = ojson::array();
  for (const auto& [key, idx] : ds.groups()) {
    groups.push_back({{"team", key.first}, {"delivery", data::to_string(key.second)}, {"sequences", idx.size()}});
  }
  summary["groups"] = groups;
  manifest.write_output("ingest_summary.json", summary.dump(2) + "\n");
  manifest.finish(config_json(c));
  spdlog::info("ingested {} sequences ({} frames, {} groups, {} trainable in strict mode)", ds.size(), frames,
               ds.groups().size(), usable.size());
  std::cerr << summary.dump(2) << '\n';
}

void cmd_train(const RunConfig& c) {
  c.em.validate();
  Manifest manifest("train", c.out);
  const auto ds = trainable(c, load_inputs(c, manifest));
  ojson report;
  report["schema"] = "cdhmm-train-report/1";
  ojson groups = ojson::array();
  CsvWriter traces("cdhmm-ll-trace/1", {"team", "delivery", "seed", "iteration", "loglik", "penalized"});
  std::set<std::string> stems;
  if (ds.groups().empty()) spdlog::warn("no trainable sequences; nothing to train");
  for (const auto& [key, idx] : ds.groups()) {
    if (idx.empty()) {
      spdlog::warn("group {} / {} has no sequences; skipped", key.first, data::to_string(key.second));
      continue;
    }
    const auto stem = group_stem(key.first, key.second);
    if (!stems.insert(stem).second) throw ValidationError("team ids collide after sanitising: " + stem);
    spdlog::info("training {} / {} on {} sequences, {} seeds", key.first, data::to_string(key.second), idx.size(),
                 c.em.batch_size);
    const auto bundle = train::batch_train(ds.subset(idx), c.em);

    io::ModelFile file{bundle.best, bundle.config, bundle.ll_traces[bundle.best_index]};
    const std::string rel = "models/" + stem + ".model.json";
    manifest.write_output(rel, io::serialize_model(file));

    ojson g;
    g["team"] = key.first;
    g["delivery"] = data::to_string(key.second);
    g["sequences"] = idx.size();
    g["model"] = rel;
    g["best_index"] = bundle.best_index;
    g["seeds"] = bundle.seeds;
    ojson finals = ojson::array();
    for (double v : bundle.final_loglik) finals.push_back(std::isfinite(v) ? ojson(v) : ojson(nullptr));
    g["final_loglik"] = finals;
    g["ll_traces"] = bundle.ll_traces;
    g["penalized_traces"] = bundle.penalized_traces;
    groups.push_back(g);

    for (std::size_t s = 0; s < bundle.seeds.size(); ++s) {
      const auto& ll = bundle.ll_traces[s];
      for (std::size_t i = 0; i < ll.size(); ++i) {
        traces.row({key.first, data::to_string(key.second), std::to_string(bundle.seeds[s]), std::to_string(i),
                    fmt(ll[i]), fmt(bundle.penalized_traces[s][i])});
      }
      if (!ll.empty()) spdlog::info("  seed {}: final log-likelihood {:.4f}", bundle.seeds[s], ll.back());
    }
  }
  report["groups"] = groups;
  manifest.write_output("train_report.json", report.dump(2) + "\n");
  manifest.write_output("ll_traces.csv", traces.str());
  manifest.finish(config_json(c));
}

ojson snapshot(const data::CornerSequence& seq, const hmm::CdhmmParams& params, const hmm::SequenceDecoding& dec,
               std::size_t t) {
  ojson s;
  s["schema"] = "cdhmm-assignment-snapshot/1";
  s["sequence_id"] = seq.sequence_id;
  s["frame"] = t;
  const auto atts = seq.attackers();
  const auto& players = seq.frames[t].players;
  ojson attackers = ojson::array();
  for (auto a : atts) {
    attackers.push_back({{"id", seq.roster[a].id}, {"position", vec(players[a].position)}});
  }
  s["attackers"] = attackers;
  ojson defenders = ojson::array();
  const std::size_t K = params.states.attackers;
  for (const auto& d : dec.defenders) {
    const std::size_t state = d.posterior.path.empty() ? 0 : d.posterior.path[t];
    ojson e;
    e["id"] = seq.roster[d.roster_index].id;
    e["position"] = vec(players[d.roster_index].position);
    e["probability"] = d.posterior.gamma(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(state));
    if (state < K) {
      e["state"] = "man";
      e["target_id"] = seq.roster[atts[state]].id;
      e["target_position"] = vec(players[atts[state]].position);
    } else {
      e["state"] = "zonal";
      e["zone"] = d.zone;
      e["target_position"] = vec(params.zones[d.zone].mean);
    }
    defenders.push_back(e);
  }
  s["defenders"] = defenders;
  return s;
}

void cmd_decode(const RunConfig& c) {
  Manifest manifest("decode", c.out);
  const auto models = load_models(c, manifest);
  const auto ds = trainable(c, load_inputs(c, manifest));
  std::string lines, plots;
  std::size_t man_frames = 0, zonal_frames = 0;
  for (const auto& seq : ds.sequences()) {
    const auto& params = model_for(models, seq);
    const auto dec = hmm::decode_sequence(params, seq);
    const std::size_t K = params.states.attackers;
    const auto atts = seq.attackers();
    ojson r;
    r["schema"] = "cdhmm-decode/1";
    r["sequence_id"] = seq.sequence_id;
    r["team"] = seq.defending_team_id;
    r["delivery"] = data::to_string(seq.delivery_type);
    r["frames"] = seq.frame_count();
    r["attackers"] = K;
    std::vector<std::string> att_ids;
    for (auto a : atts) att_ids.push_back(seq.roster[a].id);
    r["attacker_ids"] = att_ids;
    r["loglik"] = dec.loglik;
    ojson defs = ojson::array();
    for (const auto& d : dec.defenders) {
      ojson e;
      e["id"] = seq.roster[d.roster_index].id;
      e["zone"] = d.zone;
      e["loglik"] = d.posterior.loglik;
      e["viterbi_log_prob"] = d.viterbi_log_prob;
      e["states"] = d.posterior.path;
      for (auto s : d.posterior.path) (s < K ? man_frames : zonal_frames)++;
      if (c.include_gamma) {
        ojson g = ojson::array();
        for (Eigen::Index t = 0; t < d.posterior.gamma.rows(); ++t) {
          std::vector<double> row(static_cast<std::size_t>(d.posterior.gamma.cols()));
          for (Eigen::Index n = 0; n < d.posterior.gamma.cols(); ++n) row[n] = d.posterior.gamma(t, n);
          g.push_back(row);
        }
        e["gamma"] = g;
      }
      defs.push_back(e);
    }
    r["defenders"] = defs;
    lines += r.dump() + "\n";

    std::set<std::size_t> frames{0, seq.delivery_frame};
    if (seq.first_contact && seq.first_contact->frame < seq.frame_count()) frames.insert(seq.first_contact->frame);
    for (auto t : frames) plots += snapshot(seq, params, dec, t).dump() + "\n";
  }
  manifest.write_output("decode.jsonl", lines);
  manifest.write_output("plot_data.jsonl", plots);
  ojson summary;
  summary["schema"] = "cdhmm-decode-summary/1";
  summary["sequences"] = ds.size();
  summary["man_marking_frames"] = man_frames;
  summary["zonal_frames"] = zonal_frames;
  manifest.write_output("decode_summary.json", summary.dump(2) + "\n");
  manifest.finish(config_json(c));
  spdlog::info("decoded {} sequences", ds.size());
}

void cmd_metrics(const RunConfig& c) {
  Manifest manifest("metrics", c.out);
  const auto models = load_models(c, manifest);
  const auto ds = trainable(c, load_inputs(c, manifest));
  const auto decodings = decode_all(models, ds);

  const auto profiles = metrics::player_profiles(ds, decodings, c.profile);
  CsvWriter csv("cdhmm-player-profiles/1", {"player_id", "sequences", "context_aware_attention", "evasion_score",
                                            "effective_assignments", "switch_rate", "first_contact_proximity"});
  ojson pj = ojson::array();
  for (const auto& p : profiles) {
    csv.row({p.player_id, std::to_string(p.sequences_observed), opt_csv(p.context_aware_attention),
             opt_csv(p.evasion_score), opt_csv(p.effective_assignments), opt_csv(p.switch_rate),
             opt_csv(p.first_contact_proximity)});
    pj.push_back({{"player_id", p.player_id},
                  {"sequences", p.sequences_observed},
                  {"context_aware_attention", opt(p.context_aware_attention)},
                  {"evasion_score", opt(p.evasion_score)},
                  {"effective_assignments", opt(p.effective_assignments)},
                  {"switch_rate", opt(p.switch_rate)},
                  {"first_contact_proximity", opt(p.first_contact_proximity)}});
  }
  manifest.write_output("profiles.csv", csv.str());

  std::vector<metrics::AttentionRecord> records;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto r = metrics::attention_records(ds[i], decodings[i], c.profile.soft);
    records.insert(records.end(), r.begin(), r.end());
  }
  CsvWriter att("cdhmm-attention/1", {"sequence_id", "attacker_id", "team_id", "attention"});
  for (const auto& r : records) att.row({r.sequence_id, r.attacker_id, r.team_id, fmt(r.attention)});
  manifest.write_output("attention.csv", att.str());

  const auto baselines = metrics::team_baselines(records);
  CsvWriter base("cdhmm-team-baselines/1", {"team_id", "baseline_attention"});
  ojson bj = ojson::object();
  for (const auto& [team, v] : baselines) {
    base.row({team, fmt(v)});
    bj[team] = v;
  }
  manifest.write_output("team_baselines.csv", base.str());

  ojson report;
  report["schema"] = "cdhmm-metrics/1";
  report["sequences"] = ds.size();
  report["min_sequences"] = c.profile.min_sequences;
  report["team_baselines"] = bj;
  report["profiles"] = pj;
  manifest.write_output("metrics.json", report.dump(2) + "\n");
  manifest.finish(config_json(c));
  spdlog::info("{} player profiles from {} sequences", profiles.size(), ds.size());
}

void cmd_ghost(const RunConfig& c) {
  c.ghost.validate();
  Manifest manifest("ghost", c.out);
  const auto models = load_models(c, manifest);
  const auto ds = trainable(c, load_inputs(c, manifest));
  ghost::BaselineReceptionModel reception;
  if (c.reception_model.empty()) {
    reception = ghost::BaselineReceptionModel::reference();
  } else {
    manifest.add_input(c.reception_model);
    reception = ghost::BaselineReceptionModel::load(c.reception_model);
  }
  const std::vector<const ghost::OutcomeModel*> outcome{&reception};
  const auto decodings = decode_all(models, ds);

  std::string lines;
  std::map<std::pair<std::string, std::size_t>, std::vector<double>> by_size;
  CsvWriter obpr_csv("cdhmm-obpr/1", {"sequence_id", "defender_id", "obpr"});
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& seq = ds[i];
    const auto& params = model_for(models, seq);
    const auto atts = seq.attackers();
    const auto delivery = data::to_string(seq.delivery_type);
    for (const auto& ev : ghost::evaluate_sequence(params, seq, decodings[i], reception, c.ghost)) {
      const auto d = ghost::delta_metrics(params, seq, ev.frame, ev.defender, ev.optimal_role, outcome, c.ghost);
      ojson r;
      r["schema"] = "cdhmm-ghost/1";
      r["sequence_id"] = ev.sequence_id;
      r["team"] = seq.defending_team_id;
      r["delivery"] = delivery;
      r["frame"] = ev.frame;
      r["defender_id"] = ev.defender_id;
      std::vector<std::string> ids;
      for (auto k : ev.feasible) ids.push_back(seq.roster[atts[k]].id);
      r["feasible"] = ids;
      r["role_expectations"] = ev.role_expectations;
      r["observed"] = ev.observed;
      r["optimal"] = ev.optimal;
      r["optimal_role"] = seq.roster[atts[ev.optimal_role]].id;
      r["gca"] = ev.gca;
      r["delta"] = {{"reception", opt(d.reception)},
                    {"recovery", opt(d.recovery)},
                    {"threat", opt(d.threat)},
                    {"counterattack", opt(d.counterattack)}};
      lines += r.dump() + "\n";
      by_size[{delivery, ev.feasible.size()}].push_back(ev.gca);
    }
    const std::size_t K = params.states.attackers;
    for (const auto& dd : decodings[i].defenders) {
      const auto v = ghost::obpr(seq, dd.posterior.gamma.leftCols(static_cast<Eigen::Index>(K)), reception);
      obpr_csv.row({seq.sequence_id, seq.roster[dd.roster_index].id, fmt(v)});
    }
  }
  manifest.write_output("ghost.jsonl", lines);
  manifest.write_output("obpr.csv", obpr_csv.str());

  CsvWriter summary("cdhmm-ghost-summary/1", {"delivery", "feasible_size", "count", "mean_gca", "sd_gca",
                                              "median_gca", "min_gca", "max_gca"});
  for (const auto& [key, v] : by_size) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    summary.row({key.first, std::to_string(key.second), std::to_string(v.size()), fmt(mean), fmt(sd),
                 fmt(metrics::median(v)), fmt(*std::min_element(v.begin(), v.end())),
                 fmt(*std::max_element(v.begin(), v.end()))});
  }
  manifest.write_output("ghost_summary.csv", summary.str());

  if (!c.sweep_tau.empty() || !c.sweep_theta.empty()) {
    const auto taus = c.sweep_tau.empty() ? std::vector<double>{c.ghost.tau} : c.sweep_tau;
    const auto thetas = c.sweep_theta.empty() ? std::vector<double>{c.ghost.theta} : c.sweep_theta;
    CsvWriter sweep("cdhmm-ghost-sweep/1",
                    {"team", "delivery", "tau", "theta", "evaluations", "mean_feasible", "mean_gca"});
    for (const auto& [key, idx] : ds.groups()) {
      std::vector<data::CornerSequence> seqs;
      std::vector<hmm::SequenceDecoding> decs;
      for (auto i : idx) {
        seqs.push_back(ds[i]);
        decs.push_back(decodings[i]);
      }
      const auto& params = model_for(models, seqs.front());
      for (const auto& row : ghost::sweep(params, seqs, decs, reception, c.ghost, taus, thetas)) {
        sweep.row({key.first, data::to_string(key.second), fmt(row.tau), fmt(row.theta),
                   std::to_string(row.evaluations), fmt(row.mean_feasible), fmt(row.mean_gca)});
      }
    }
    manifest.write_output("ghost_sweep.csv", sweep.str());
  }
  manifest.finish(config_json(c));
  spdlog::info("ghost evaluation finished for {} sequences", ds.size());
}

void cmd_sensitivity(const RunConfig& c) {
  c.em.validate();
  Manifest manifest("sensitivity", c.out);
  const auto ds = trainable(c, load_inputs(c, manifest));
  if (ds.groups().size() != 1) {
    throw ValidationError("sensitivity needs exactly one (team, delivery) group, found " +
                          std::to_string(ds.groups().size()) + "; narrow it with --team and --delivery");
  }
  metrics::SensitivityOptions o;
  o.step = c.sens_step;
  o.seeds = c.sens_seeds;
  o.em = c.em;
  o.max_size = c.sens_max;
  const auto points = metrics::sensitivity(ds, o);

  CsvWriter csv("cdhmm-sensitivity/1", {"size", "zone_disagreement_median", "beta_man", "beta_zonal",
                                        "beta_switching", "normalized_loglik_mean"});
  ojson pts = ojson::array();
  std::vector<double> sizes, medians;
  for (const auto& p : points) {
    double nll = 0.0;
    for (double v : p.normalized_loglik) nll += v;
    nll /= static_cast<double>(p.normalized_loglik.size());
    csv.row({std::to_string(p.size), fmt(p.zone_disagreement_median), fmt(p.beta.man), fmt(p.beta.zonal),
             fmt(p.beta.switching), fmt(nll)});
    pts.push_back({{"size", p.size},
                   {"zone_disagreements", p.zone_disagreements},
                   {"zone_disagreement_median", p.zone_disagreement_median},
                   {"beta", {{"man", p.beta.man}, {"zonal", p.beta.zonal}, {"switching", p.beta.switching}}},
                   {"normalized_loglik", p.normalized_loglik}});
    sizes.push_back(static_cast<double>(p.size));
    medians.push_back(p.zone_disagreement_median);
  }
  ojson report;
  report["schema"] = "cdhmm-sensitivity/1";
  report["points"] = pts;
  report["spearman_size_vs_zone_median"] =
      sizes.size() >= 2 ? ojson(metrics::spearman(sizes, medians)) : ojson(nullptr);
  manifest.write_output("sensitivity.csv", csv.str());
  manifest.write_output("sensitivity.json", report.dump(2) + "\n");
  manifest.finish(config_json(c));
}

void cmd_synth(const RunConfig& c) {
  Manifest manifest("synth", c.out);
  synth::TruthOptions t;
  t.attackers = c.synth_attackers;
  t.marking_sigma2 = c.synth_sigma2;
  t.zone_variance = c.synth_zone_variance;
  t.gamma_o = c.synth_gamma_o;
  t.zonal_initial = c.synth_zonal_initial;
  synth::ScenarioSpec spec;
  spec.truth = synth::truth_params(t);
  if (c.team) spec.truth.team_id = *c.team;
  if (c.delivery) spec.truth.delivery_type = data::delivery_from_string(*c.delivery);
  spec.defenders = spec.truth.zones.size();
  spec.frames = c.synth_frames;
  spec.delivery_frame = c.synth_delivery;
  if (c.synth_motion == "ou") {
    spec.motion.kind = synth::MotionSpec::Kind::OrnsteinUhlenbeck;
  } else if (c.synth_motion == "random-walk") {
    spec.motion.kind = synth::MotionSpec::Kind::RandomWalk;
  } else {
    throw ValidationError("motion must be 'ou' or 'random-walk', got '" + c.synth_motion + "'");
  }
  spec.validate();
  const auto generated = synth::generate_dataset(spec, c.synth_count, c.seed, c.synth_prefix);
  std::ostringstream data_text, latent_text;
  data::write_dataset(synth::to_dataset(generated), data_text);
  synth::write_latents(latent_text, generated);
  manifest.write_output("synth.jsonl", data_text.str());
  manifest.write_output("synth_latents.jsonl", latent_text.str());
  manifest.write_output("truth.model.json", io::serialize_model(io::ModelFile{spec.truth, std::nullopt, {}}));
  manifest.finish(config_json(c));
  spdlog::info("generated {} synthetic sequences", generated.size());
}

// ---- command line ---------------------------------------------------------

void add_common(CLI::App* sub, RunConfig& c, bool inputs, bool models) {
  if (inputs) sub->add_option("-i,--input", c.inputs, "Tracking dataset (JSONL); repeatable");
  if (models) sub->add_option("-m,--model", c.models, "Model file or directory of *.model.json; repeatable");
  sub->add_option("-o,--out", c.out, "Output directory");
  sub->add_option("--config", c.config_path, "JSON config; its values override flags");
  sub->add_option("--team", c.team, "Only this defending team");
  sub->add_option("--delivery", c.delivery, "Only this delivery type (inswing|outswing)");
  sub->add_option("--seed", c.seed, "Random seed");
  sub->add_option("-v,--verbosity", c.verbosity, "0 warnings, 1 info, 2 debug");
  sub->add_flag("--permissive", c.permissive, "Accept squads other than 10 v 10");
}

void add_em(CLI::App* sub, RunConfig& c) {
  sub->add_option("--iterations", c.em.iterations, "EM iterations");
  sub->add_option("--batch-size", c.em.batch_size, "Random restarts per group");
  sub->add_option("--lambda-m", c.em.penalties.man, "L2 penalty on man-marking weights");
  sub->add_option("--lambda-z", c.em.penalties.zonal, "L2 penalty on zonal weights");
  sub->add_option("--lambda-s", c.em.penalties.switching, "L2 penalty on switching weights");
  sub->add_option("--inner-iterations", c.em.inner_max_iterations, "L-BFGS iterations per M-step");
  sub->add_option("--tolerance", c.em.tolerance, "Early-stop log-likelihood change (0 disables)");
  sub->add_flag("!--no-inverse-likelihood-weights", c.em.inverse_likelihood_weights,
                "Unweighted zone statistics instead of 1 / L per track");
  sub->add_flag("--zone-means-all-frames", c.em.zone_means_all_frames, "Zone means from every frame");
}

}  // namespace

int run(const std::vector<std::string>& args) {
  // Restore the caller's default logger on exit; library code logs through it.
  struct Restore {
    std::shared_ptr<spdlog::logger> previous = spdlog::default_logger();
    ~Restore() {
      spdlog::set_default_logger(previous);
      spdlog::drop("cdhmm");
    }
  } restore;
  spdlog::set_default_logger(spdlog::stderr_color_mt("cdhmm"));

  RunConfig c;
  CLI::App app{"Covariate-dependent HMM for corner-kick marking assignments", "cdhmm"};
  app.require_subcommand(1, 1);

  auto* ingest = app.add_subcommand("ingest", "Validate and canonicalise tracking data");
  add_common(ingest, c, true, false);
  ingest->add_flag("--estimate-velocities", c.estimate_velocities, "Re-derive velocities from positions");
  ingest->add_option("--velocity-window", c.velocity_window, "Smoothing window in frames");
  ingest->add_flag("--truncate", c.truncate, "Apply the standard analysis window");

  auto* trn = app.add_subcommand("train", "Fit one model per (team, delivery)");
  add_common(trn, c, true, false);
  add_em(trn, c);

  auto* decode = app.add_subcommand("decode", "Per-frame assignments for every sequence");
  add_common(decode, c, true, true);
  decode->add_flag("!--no-gamma", c.include_gamma, "Omit posterior occupancies");

  auto* met = app.add_subcommand("metrics", "Player profiles and attention tables");
  add_common(met, c, true, true);
  met->add_option("--min-sequences", c.profile.min_sequences, "Minimum appearances per profiled player");
  met->add_flag("--soft", c.profile.soft, "Posterior occupancies instead of Viterbi paths");
  met->add_flag("--include-zonal-entry", c.profile.include_zonal_entry, "Count zonal -> man entries as switches");

  auto* gh = app.add_subcommand("ghost", "Counterfactual ghost evaluation");
  add_common(gh, c, true, true);
  gh->add_option("--mc-samples", c.ghost.mc_samples, "Monte Carlo samples per ghost");
  gh->add_option("--tau", c.ghost.tau, "Attention softmax temperature");
  gh->add_option("--theta", c.ghost.theta, "Feasible-set threshold");
  gh->add_flag("--all-frames", c.ghost.all_frames, "Evaluate every frame, not only the delivery");
  gh->add_flag_function("--filtered", [&c](std::int64_t) { c.ghost.occupancy = ghost::OccupancySource::Filtered; },
               "Use forward-only occupancies");
  gh->add_option("--reception-model", c.reception_model, "Reception model weights (JSON)");
  gh->add_option("--sweep-tau", c.sweep_tau, "Tau values for a sweep");
  gh->add_option("--sweep-theta", c.sweep_theta, "Theta values for a sweep");

  auto* sens = app.add_subcommand("sensitivity", "Model disagreement versus training size");
  add_common(sens, c, true, false);
  add_em(sens, c);
  sens->add_option("--step", c.sens_step, "Batch step in sequences");
  sens->add_option("--seeds", c.sens_seeds, "Models per size");
  sens->add_option("--max-size", c.sens_max, "Largest size (0 = all)");

  auto* syn = app.add_subcommand("synth", "Generate synthetic sequences from known parameters");
  add_common(syn, c, false, false);
  syn->add_option("--count", c.synth_count, "Number of sequences");
  syn->add_option("--attackers", c.synth_attackers, "Outfield players per side");
  syn->add_option("--frames", c.synth_frames, "Frames per sequence");
  syn->add_option("--delivery-frame", c.synth_delivery, "Delivery frame index");
  syn->add_option("--marking-sigma2", c.synth_sigma2, "Marking emission variance (m^2)");
  syn->add_option("--zone-variance", c.synth_zone_variance, "Zone covariance scale (m^2)");
  syn->add_option("--gamma-o", c.synth_gamma_o, "Marking tightness");
  syn->add_option("--zonal-initial", c.synth_zonal_initial, "Initial zonal probability");
  syn->add_option("--motion", c.synth_motion, "Attacker motion: ou | random-walk");
  syn->add_option("--prefix", c.synth_prefix, "Sequence id prefix");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    c.command = app.get_subcommands().front()->get_name();
    c.em.seed = c.seed;
    c.ghost.seed = c.seed;
    if (!c.config_path.empty()) {
      json j;
      try {
        j = json::parse(io::read_file(c.config_path));
      } catch (const json::exception& e) {
        throw ValidationError("config " + c.config_path + ": " + e.what());
      }
      apply_config(c, j);
    }
    spdlog::set_level(c.verbosity <= 0   ? spdlog::level::warn
                      : c.verbosity == 1 ? spdlog::level::info
                                         : spdlog::level::debug);

    if (c.command == "ingest") cmd_ingest(c);
    else if (c.command == "train") cmd_train(c);
    else if (c.command == "decode") cmd_decode(c);
    else if (c.command == "metrics") cmd_metrics(c);
    else if (c.command == "ghost") cmd_ghost(c);
    else if (c.command == "sensitivity") cmd_sensitivity(c);
    else if (c.command == "synth") cmd_synth(c);
    return kExitOk;
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return kExitValidation;
  } catch (const json::exception& e) {
    spdlog::error("config: {}", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
}

}  // namespace cdhmm::cli
