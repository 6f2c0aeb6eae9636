// tools/mcbeam.cc

// Copyright 2026  mcbeam authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLENESS OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Pipeline driver: scene simulation, feature dumps, beamforming in all
// supported modes, recurrent-net training, metric reports, beam patterns and
// ablation sweeps. Every command is deterministic given --seed; manifests
// record the config hash and estimator provenance and contain no timestamps.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mcbeam/adl.h"
#include "mcbeam/common.h"
#include "mcbeam/estimators.h"
#include "mcbeam/features.h"
#include "mcbeam/gru.h"
#include "mcbeam/metrics.h"
#include "mcbeam/mvdr.h"
#include "mcbeam/room.h"
#include "mcbeam/signal.h"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mcbeam;

namespace {

// ---------------------------------------------------------------------------
// Config plumbing.

void fail_config(const std::string &msg) { throw ConfigError(msg); }

// Unknown keys are rejected at every level so typos fail fast.
void check_keys(const json &obj, const std::set<std::string> &allowed,
                const std::string &ctx) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      fail_config("config: unknown key '" + it.key() + "' in " + ctx);
}

json load_json_file(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path);
  json j;
  try {
    is >> j;
  } catch (const json::parse_error &e) {
    fail_config("config: " + path + ": " + e.what());
  }
  if (!j.is_object()) fail_config("config: top level must be an object");
  return j;
}

// --set a.b.c=value overrides; the value is parsed as JSON when possible,
// else taken as a string.
void apply_overrides(json *cfg, const std::vector<std::string> &sets) {
  for (const std::string &s : sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
      fail_config("--set expects key.path=value, got '" + s + "'");
    std::string path = s.substr(0, eq), value = s.substr(eq + 1);
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::parse_error &) {
      parsed = value;
    }
    json *node = cfg;
    size_t pos = 0;
    while (true) {
      size_t dot = path.find('.', pos);
      std::string key = path.substr(pos, dot == std::string::npos ? dot : dot - pos);
      if (key.empty()) fail_config("--set: empty key segment in '" + s + "'");
      if (dot == std::string::npos) {
        (*node)[key] = parsed;
        break;
      }
      node = &(*node)[key];
      if (!node->is_object() && !node->is_null())
        fail_config("--set: '" + key + "' is not an object in '" + s + "'");
      pos = dot + 1;
    }
  }
}

// Output location is not part of the experiment identity.
std::string hash_hex(const json &cfg) {
  json keyed = cfg;
  keyed.erase("out_dir");
  std::string dump = keyed.dump();
  uint64_t h = fnv1a64(dump.data(), dump.size());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_text_atomic(const std::string &path, const std::string &content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot open " + tmp);
    os << content;
    if (!os) throw IoError("write failed for " + tmp);
  }
  fs::rename(tmp, path);
}

void write_manifest(const std::string &path, const json &j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

// Binary matrix dump: magic, rows, cols, row-major doubles.
void write_matrix(const Mat &m, const std::string &path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path);
  os.write("MCBM", 4);
  int64_t rows = m.rows(), cols = m.cols();
  os.write(reinterpret_cast<const char *>(&rows), 8);
  os.write(reinterpret_cast<const char *>(&cols), 8);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      double v = m(r, c);
      os.write(reinterpret_cast<const char *>(&v), 8);
    }
  if (!os) throw IoError("write failed for " + path);
}

// ---------------------------------------------------------------------------
// Run configuration.

struct SceneRanges {
  int count = 1;
  double duration_s = 2.0;
  int speakers = 2;  // 0 draws 1..3 per scene
  double rt60_lo = 0.05, rt60_hi = 0.7;
  Eigen::Vector3d room_min{4.0, 4.0, 3.0};
  Eigen::Vector3d room_max{10.0, 10.0, 6.0};
  bool noise_enabled = true;
  double snr_lo = 18.0, snr_hi = 30.0;
  double sir_lo = -6.0, sir_hi = 6.0;
  double dist_lo = 0.5, dist_hi = 6.0;
  int max_order = -1;
};

struct TrainOptions {
  std::string target = "inverse";   // inverse | vector
  std::string source = "synthetic"; // synthetic | scene
  std::string scene_dir;
  int steps = 500;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::vector<int> hidden = {48, 48};
  int streams = 8;
  int frames = 24;
  int warmup = 4;
  int k_snapshots = 256;
  double gap_lo = 0.5, gap_hi = 0.7;
  double diag_load = 0.5;
  double forgetting = 0.9;
  int max_frames = 0;  // scene source: 0 keeps all frames
  std::string out_prefix = "net";
};

struct RunConfig {
  uint64_t seed = 1;
  std::string out_dir = "out";
  std::string mode = "mvdr-chunk";
  std::string estimator = "oracle-crm";
  std::string weight_rule = "eigenvector";
  int reference_channel = 7;
  std::vector<int> channels;  // indices into the 15-element preset
  double loading = 1e-5;
  int mf_l1 = 3, mf_l2 = 2;
  std::string mf_covariance = "recursive";
  int crf_j1 = 1, crf_j2 = 1, crf_k1 = 1, crf_k2 = 1;
  int rec_block = 30, rec_hop = 10;
  double rec_forgetting = 0.9;
  std::string filter_path;
  SceneRanges scene;
  std::string adl_mode = "mc";
  std::vector<int> adl_inv_hidden = {64, 64};
  std::vector<int> adl_v_hidden = {64, 32};
  std::string adl_inv_net, adl_v_net;
  TrainOptions train;
  json raw;  // effective config, hashed into manifests
};

std::vector<int> named_subset(const std::string &name) {
  if (name == "3ch") return {0, 7, 14};
  if (name == "7ch") return {0, 3, 5, 7, 9, 11, 14};
  if (name == "9ch") return {0, 2, 3, 5, 7, 9, 11, 12, 14};
  if (name == "15ch") {
    std::vector<int> all(15);
    for (int i = 0; i < 15; ++i) all[i] = i;
    return all;
  }
  fail_config("config: unknown channel subset '" + name + "'");
  return {};
}

std::vector<int> parse_channels(const json &j) {
  if (j.is_string()) return named_subset(j.get<std::string>());
  if (j.is_array()) {
    std::vector<int> out;
    for (const json &v : j) {
      if (!v.is_number_integer()) fail_config("config: channels must be integers");
      out.push_back(v.get<int>());
    }
    return out;
  }
  fail_config("config: channels must be a name or an index array");
  return {};
}

void parse_range(const json &j, double *lo, double *hi, const std::string &ctx) {
  if (j.is_number()) {
    *lo = *hi = j.get<double>();
  } else if (j.is_array() && j.size() == 2) {
    *lo = j[0].get<double>();
    *hi = j[1].get<double>();
  } else {
    fail_config("config: " + ctx + " must be a number or [lo, hi]");
  }
  if (*lo > *hi) fail_config("config: " + ctx + " range is inverted");
}

std::vector<int> parse_int_list(const json &j, const std::string &ctx) {
  if (!j.is_array()) fail_config("config: " + ctx + " must be an array");
  std::vector<int> out;
  for (const json &v : j) out.push_back(v.get<int>());
  return out;
}

RunConfig parse_run_config(const json &j) {
  check_keys(j, {"seed", "out_dir", "mode", "estimator", "weight_rule",
                 "reference_channel", "channels", "loading", "mf", "crf",
                 "recursive", "filter_path", "scene", "adl", "train", "sweep",
                 "beampattern"},
             "top level");
  RunConfig c;
  c.raw = j;
  c.channels = named_subset("15ch");
  if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
  if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("mode")) c.mode = j["mode"].get<std::string>();
  if (j.contains("estimator")) c.estimator = j["estimator"].get<std::string>();
  if (j.contains("weight_rule")) c.weight_rule = j["weight_rule"].get<std::string>();
  if (j.contains("reference_channel"))
    c.reference_channel = j["reference_channel"].get<int>();
  if (j.contains("channels")) c.channels = parse_channels(j["channels"]);
  if (j.contains("loading")) c.loading = j["loading"].get<double>();
  if (j.contains("filter_path")) c.filter_path = j["filter_path"].get<std::string>();
  if (j.contains("mf")) {
    check_keys(j["mf"], {"l1", "l2", "covariance"}, "mf");
    if (j["mf"].contains("l1")) c.mf_l1 = j["mf"]["l1"].get<int>();
    if (j["mf"].contains("l2")) c.mf_l2 = j["mf"]["l2"].get<int>();
    if (j["mf"].contains("covariance"))
      c.mf_covariance = j["mf"]["covariance"].get<std::string>();
  }
  if (j.contains("crf")) {
    check_keys(j["crf"], {"j1", "j2", "k1", "k2"}, "crf");
    if (j["crf"].contains("j1")) c.crf_j1 = j["crf"]["j1"].get<int>();
    if (j["crf"].contains("j2")) c.crf_j2 = j["crf"]["j2"].get<int>();
    if (j["crf"].contains("k1")) c.crf_k1 = j["crf"]["k1"].get<int>();
    if (j["crf"].contains("k2")) c.crf_k2 = j["crf"]["k2"].get<int>();
  }
  if (j.contains("recursive")) {
    check_keys(j["recursive"], {"block", "hop", "forgetting"}, "recursive");
    if (j["recursive"].contains("block")) c.rec_block = j["recursive"]["block"].get<int>();
    if (j["recursive"].contains("hop")) c.rec_hop = j["recursive"]["hop"].get<int>();
    if (j["recursive"].contains("forgetting"))
      c.rec_forgetting = j["recursive"]["forgetting"].get<double>();
  }
  if (j.contains("scene")) {
    const json &s = j["scene"];
    check_keys(s, {"count", "duration_s", "speakers", "rt60", "room_min",
                   "room_max", "snr_db", "sir_db", "distance", "max_order"},
               "scene");
    if (s.contains("count")) c.scene.count = s["count"].get<int>();
    if (s.contains("duration_s")) c.scene.duration_s = s["duration_s"].get<double>();
    if (s.contains("speakers")) c.scene.speakers = s["speakers"].get<int>();
    if (s.contains("rt60")) parse_range(s["rt60"], &c.scene.rt60_lo, &c.scene.rt60_hi, "scene.rt60");
    auto parse_dims = [&](const json &v, Eigen::Vector3d *out, const std::string &ctx) {
      if (!v.is_array() || v.size() != 3) fail_config("config: " + ctx + " must have 3 entries");
      for (int i = 0; i < 3; ++i) (*out)(i) = v[i].get<double>();
    };
    if (s.contains("room_min")) parse_dims(s["room_min"], &c.scene.room_min, "scene.room_min");
    if (s.contains("room_max")) parse_dims(s["room_max"], &c.scene.room_max, "scene.room_max");
    if (s.contains("snr_db")) {
      if (s["snr_db"].is_string() && s["snr_db"] == "off")
        c.scene.noise_enabled = false;
      else
        parse_range(s["snr_db"], &c.scene.snr_lo, &c.scene.snr_hi, "scene.snr_db");
    }
    if (s.contains("sir_db")) parse_range(s["sir_db"], &c.scene.sir_lo, &c.scene.sir_hi, "scene.sir_db");
    if (s.contains("distance")) parse_range(s["distance"], &c.scene.dist_lo, &c.scene.dist_hi, "scene.distance");
    if (s.contains("max_order")) c.scene.max_order = s["max_order"].get<int>();
  }
  if (j.contains("adl")) {
    const json &a = j["adl"];
    check_keys(a, {"mode", "preset", "inv_hidden", "v_hidden", "inv_net", "v_net"}, "adl");
    if (a.contains("preset")) {
      AdlMvdrConfig p = AdlMvdrConfig::preset(a["preset"].get<std::string>());
      c.adl_mode = p.mode == CovLayout::kMC ? "mc" : (p.mode == CovLayout::kMF ? "mf" : "mcmf");
      c.adl_inv_hidden = p.inv_hidden;
      c.adl_v_hidden = p.v_hidden;
      c.mf_l1 = p.l1;
      c.mf_l2 = p.l2;
    }
    if (a.contains("mode")) c.adl_mode = a["mode"].get<std::string>();
    if (a.contains("inv_hidden")) c.adl_inv_hidden = parse_int_list(a["inv_hidden"], "adl.inv_hidden");
    if (a.contains("v_hidden")) c.adl_v_hidden = parse_int_list(a["v_hidden"], "adl.v_hidden");
    if (a.contains("inv_net")) c.adl_inv_net = a["inv_net"].get<std::string>();
    if (a.contains("v_net")) c.adl_v_net = a["v_net"].get<std::string>();
  }
  if (j.contains("train")) {
    const json &t = j["train"];
    check_keys(t, {"target", "source", "scene_dir", "steps", "learning_rate",
                   "momentum", "hidden", "streams", "frames", "warmup",
                   "k_snapshots", "gap", "diag_load", "forgetting", "max_frames",
                   "out_prefix"},
               "train");
    if (t.contains("target")) c.train.target = t["target"].get<std::string>();
    if (t.contains("source")) c.train.source = t["source"].get<std::string>();
    if (t.contains("scene_dir")) c.train.scene_dir = t["scene_dir"].get<std::string>();
    if (t.contains("steps")) c.train.steps = t["steps"].get<int>();
    if (t.contains("learning_rate")) c.train.learning_rate = t["learning_rate"].get<double>();
    if (t.contains("momentum")) c.train.momentum = t["momentum"].get<double>();
    if (t.contains("hidden")) c.train.hidden = parse_int_list(t["hidden"], "train.hidden");
    if (t.contains("streams")) c.train.streams = t["streams"].get<int>();
    if (t.contains("frames")) c.train.frames = t["frames"].get<int>();
    if (t.contains("warmup")) c.train.warmup = t["warmup"].get<int>();
    if (t.contains("k_snapshots")) c.train.k_snapshots = t["k_snapshots"].get<int>();
    if (t.contains("gap")) parse_range(t["gap"], &c.train.gap_lo, &c.train.gap_hi, "train.gap");
    if (t.contains("diag_load")) c.train.diag_load = t["diag_load"].get<double>();
    if (t.contains("forgetting")) c.train.forgetting = t["forgetting"].get<double>();
    if (t.contains("max_frames")) c.train.max_frames = t["max_frames"].get<int>();
    if (t.contains("out_prefix")) c.train.out_prefix = t["out_prefix"].get<std::string>();
  }

  std::set<int> seen;
  for (int ch : c.channels) {
    if (ch < 0 || ch >= 15) fail_config("config: channel index out of range [0, 15)");
    if (!seen.insert(ch).second) fail_config("config: duplicate channel index");
  }
  if (c.mode != "mvdr-chunk" && c.mode != "mvdr-recursive" && c.mode != "mf-mvdr" &&
      c.mode != "adl-mvdr")
    fail_config("config: unknown mode '" + c.mode + "'");
  if (c.estimator != "oracle-crm" && c.estimator != "oracle-crf" &&
      c.estimator != "loaded" && c.estimator != "passthrough")
    fail_config("config: unknown estimator '" + c.estimator + "'");
  if (c.weight_rule != "eigenvector" && c.weight_rule != "reference")
    fail_config("config: unknown weight_rule '" + c.weight_rule + "'");
  if (c.mf_covariance != "chunk" && c.mf_covariance != "recursive")
    fail_config("config: mf.covariance must be chunk or recursive");
  return c;
}

RunConfig load_run_config(const std::string &config_path,
                          const std::vector<std::string> &sets, uint64_t seed_flag,
                          bool seed_set, const std::string &out_flag) {
  json j = config_path.empty() ? json::object() : load_json_file(config_path);
  apply_overrides(&j, sets);
  if (seed_set) j["seed"] = seed_flag;
  if (!out_flag.empty()) j["out_dir"] = out_flag;
  return parse_run_config(j);
}

ArrayGeometry subset_geometry(const RunConfig &cfg) {
  ArrayGeometry full = ArrayGeometry::linear15();
  ArrayGeometry g;
  g.mic_positions.resize(static_cast<Eigen::Index>(cfg.channels.size()), 3);
  g.reference_channel = -1;
  for (size_t i = 0; i < cfg.channels.size(); ++i) {
    g.mic_positions.row(static_cast<Eigen::Index>(i)) =
        full.mic_positions.row(cfg.channels[i]);
    if (cfg.channels[i] == cfg.reference_channel)
      g.reference_channel = static_cast<int>(i);
  }
  if (g.reference_channel < 0)
    fail_config("config: reference_channel must be part of the channel subset");
  return g;
}

// ---------------------------------------------------------------------------
// Scene generation and loading.

struct SceneRecord {
  json meta;
  ArrayScene scene;
};

SceneRecord draw_scene(const RunConfig &cfg, int index) {
  const SceneRanges &r = cfg.scene;
  Rng rng(cfg.seed);
  rng = rng.derive(0x7363656eULL + static_cast<uint64_t>(index));

  ArrayScene sc;
  for (int i = 0; i < 3; ++i)
    sc.room_dims(i) = r.room_min(i) + (r.room_max(i) - r.room_min(i)) * rng.uniform();
  sc.rt60 = r.rt60_lo + (r.rt60_hi - r.rt60_lo) * rng.uniform();
  sc.array_center = Eigen::Vector3d(sc.room_dims(0) / 2.0, sc.room_dims(1) / 2.0, 1.5);
  sc.orientation_deg = 0.0;
  sc.snr_db = r.noise_enabled
                  ? r.snr_lo + (r.snr_hi - r.snr_lo) * rng.uniform()
                  : std::numeric_limits<double>::infinity();
  sc.sir_db = r.sir_lo + (r.sir_hi - r.sir_lo) * rng.uniform();
  sc.seed = cfg.seed + 0x9000 + static_cast<uint64_t>(index);
  sc.target_index = 0;

  int speakers = r.speakers;
  if (speakers == 0) speakers = rng.uniform_int(1, 3);
  if (speakers < 1 || speakers > 3) fail_config("config: speakers must be 0..3");

  const double margin = 0.5;
  for (int s = 0; s < speakers; ++s) {
    Eigen::Vector3d pos;
    bool placed = false;
    for (int attempt = 0; attempt < 256 && !placed; ++attempt) {
      double theta = 180.0 * rng.uniform() * kPi / 180.0;
      double dist = r.dist_lo + (r.dist_hi - r.dist_lo) * rng.uniform();
      double z = 1.2 + 0.7 * rng.uniform();
      pos = sc.array_center +
            Eigen::Vector3d(dist * std::cos(theta), dist * std::sin(theta), 0.0);
      pos(2) = z;
      placed = pos(0) > margin && pos(0) < sc.room_dims(0) - margin &&
               pos(1) > margin && pos(1) < sc.room_dims(1) - margin &&
               pos(2) > margin && pos(2) < sc.room_dims(2) - margin;
    }
    if (!placed)
      throw NumericError("scene placement failed for scene " + std::to_string(index));
    sc.source_positions.push_back(pos);
  }

  SceneRecord rec;
  rec.scene = sc;
  return rec;
}

json scene_meta(const RunConfig &cfg, const ArrayScene &sc, int index,
                const std::string &id) {
  ArrayGeometry full = ArrayGeometry::linear15();
  Vec doas = scene_doa(sc, full);
  double min_angle = -1.0;
  for (int s = 0; s < sc.source_count(); ++s) {
    if (s == sc.target_index) continue;
    double d = std::abs(doas(s) - doas(sc.target_index));
    if (min_angle < 0.0 || d < min_angle) min_angle = d;
  }
  json m;
  m["id"] = id;
  m["index"] = index;
  m["seed"] = sc.seed;
  m["room"] = {sc.room_dims(0), sc.room_dims(1), sc.room_dims(2)};
  m["rt60"] = sc.rt60;
  m["snr_db"] = std::isfinite(sc.snr_db) ? json(sc.snr_db) : json("off");
  m["sir_db"] = sc.sir_db;
  m["speakers"] = sc.source_count();
  m["array_center"] = {sc.array_center(0), sc.array_center(1), sc.array_center(2)};
  m["orientation_deg"] = sc.orientation_deg;
  m["target_index"] = sc.target_index;
  json pos = json::array();
  for (const auto &p : sc.source_positions) pos.push_back({p(0), p(1), p(2)});
  m["source_positions"] = pos;
  json dl = json::array();
  for (int s = 0; s < doas.size(); ++s) dl.push_back(doas(s));
  m["doas_deg"] = dl;
  m["target_doa_deg"] = doas(sc.target_index);
  m["min_interferer_angle_deg"] = min_angle;
  m["duration_s"] = cfg.scene.duration_s;
  m["sample_rate"] = 16000;
  m["max_order"] = cfg.scene.max_order;
  m["paths"] = {{"mixture", "mixture.wav"},
                {"target", "target.wav"},
                {"interference", "interference.wav"},
                {"noise", "noise.wav"}};
  return m;
}

ArrayScene scene_from_meta(const json &m) {
  ArrayScene sc;
  for (int i = 0; i < 3; ++i) sc.room_dims(i) = m.at("room")[i].get<double>();
  sc.rt60 = m.at("rt60").get<double>();
  sc.snr_db = m.at("snr_db").is_string() ? std::numeric_limits<double>::infinity()
                                         : m.at("snr_db").get<double>();
  sc.sir_db = m.at("sir_db").get<double>();
  for (int i = 0; i < 3; ++i) sc.array_center(i) = m.at("array_center")[i].get<double>();
  sc.orientation_deg = m.at("orientation_deg").get<double>();
  sc.target_index = m.at("target_index").get<int>();
  sc.seed = m.at("seed").get<uint64_t>();
  for (const json &p : m.at("source_positions"))
    sc.source_positions.emplace_back(p[0].get<double>(), p[1].get<double>(),
                                     p[2].get<double>());
  return sc;
}

MixtureComponents synthesize_scene(const RunConfig &cfg, const ArrayScene &sc) {
  ArrayGeometry full = ArrayGeometry::linear15();
  std::vector<TimeSignal> dry;
  Rng base(sc.seed);
  for (int s = 0; s < sc.source_count(); ++s) {
    Rng r = base.derive(0x64727900ULL + static_cast<uint64_t>(s));
    dry.push_back(make_test_source(r, cfg.scene.duration_s));
  }
  RirSet rirs = simulate_rir(sc, full, 16000, cfg.scene.max_order);
  return synthesize_mixture(sc, full, dry, TimeSignal{}, &rirs);
}

struct SceneData {
  json meta;
  TimeSignal mixture;  // 15 channels
  TimeSignal target;
  std::string dir;
};

SceneData load_scene(const std::string &dir) {
  SceneData d;
  d.dir = dir;
  d.meta = load_json_file((fs::path(dir) / "scene.json").string());
  d.mixture = read_wav((fs::path(dir) / "mixture.wav").string());
  d.target = read_wav((fs::path(dir) / "target.wav").string());
  return d;
}

TimeSignal select_channels(const TimeSignal &sig, const std::vector<int> &chan) {
  TimeSignal out;
  out.sample_rate = sig.sample_rate;
  out.samples.resize(static_cast<Eigen::Index>(chan.size()), sig.samples.cols());
  for (size_t i = 0; i < chan.size(); ++i) {
    if (chan[i] >= sig.samples.rows())
      fail_config("channel index exceeds file channel count");
    out.samples.row(static_cast<Eigen::Index>(i)) = sig.samples.row(chan[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Estimation and beamforming cores.

struct EstimateResult {
  MultiChannelSpectrogram speech;
  MultiChannelSpectrogram undesired;
  CMat ref_mask;  // empty unless the estimator produces one
  std::string provenance;
};

MultiChannelSpectrogram single_channel(const MultiChannelSpectrogram &spec, int ch) {
  MultiChannelSpectrogram out;
  out.cfg = spec.cfg;
  out.channels = {spec.channels[ch]};
  return out;
}

EstimateResult estimate_components(const RunConfig &cfg,
                                   const MultiChannelSpectrogram &mix,
                                   const MultiChannelSpectrogram &target,
                                   int ref_pos) {
  EstimateResult est;
  est.speech.cfg = mix.cfg;
  const int M = mix.channel_count();
  if (cfg.estimator == "passthrough") {
    if (target.channel_count() != M)
      fail_config("passthrough estimator needs a target with matching channels");
    est.speech = target;
    est.provenance = "passthrough";
  } else if (cfg.estimator == "oracle-crm") {
    est.speech.channels.resize(M);
    for (int c = 0; c < M; ++c) {
      ComplexRatioFilter crm = oracle_crm(mix, target, 10.0, c);
      est.speech.channels[c] = mix.channels[c].cwiseProduct(crm.center());
      if (c == ref_pos) est.ref_mask = crm.center();
    }
    est.provenance = "oracle-crm";
  } else if (cfg.estimator == "oracle-crf") {
    est.speech.channels.resize(M);
    for (int c = 0; c < M; ++c) {
      ComplexRatioFilter crf = oracle_crf(mix, target, cfg.crf_j1, cfg.crf_j2,
                                          cfg.crf_k1, cfg.crf_k2, 1e-6, c);
      est.speech.channels[c] = apply_crf(single_channel(mix, c), crf).channels[0];
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "oracle-crf(%d,%d,%d,%d)", cfg.crf_j1, cfg.crf_j2,
                  cfg.crf_k1, cfg.crf_k2);
    est.provenance = buf;
  } else if (cfg.estimator == "loaded") {
    if (cfg.filter_path.empty()) fail_config("loaded estimator needs filter_path");
    MultiChannelSpectrogram mask = read_spectrogram(cfg.filter_path);
    if (mask.channel_count() != M && mask.channel_count() != 1)
      fail_config("loaded mask must have 1 channel or match the input");
    est.speech.channels.resize(M);
    for (int c = 0; c < M; ++c) {
      const CMat &mk = mask.channels[mask.channel_count() == 1 ? 0 : c];
      if (mk.rows() != mix.channels[c].rows() || mk.cols() != mix.channels[c].cols())
        fail_config("loaded mask shape does not match the mixture");
      est.speech.channels[c] = mix.channels[c].cwiseProduct(mk);
      if (c == ref_pos) est.ref_mask = mk;
    }
    est.provenance = "loaded:" + cfg.filter_path;
  } else {
    fail_config("unknown estimator " + cfg.estimator);
  }
  est.undesired = subtract(mix, est.speech);
  return est;
}

// Weights per (f, t) from the eigenvector rule: steering = principal
// eigenvector of the speech covariance rescaled so its reference entry is 1
// (aligns the output with the reference-channel speech image), loaded inverse
// of the undesired covariance. Near-zero reference entries keep the unit-norm
// gauge instead of dividing by noise.
BeamformerWeights eigenvector_weights(const CovarianceSequence &speech,
                                      const CovarianceSequence &undesired,
                                      int ref, double loading, int *stalled) {
  const int F = speech.bins();
  const int T = speech.frames();
  BeamformerWeights w;
  w.layout = speech.layout;
  w.dim = speech.dim;
  w.w.resize(F);
  for (int f = 0; f < F; ++f) {
    w.w[f].resize(speech.dim, T);
    for (int t = 0; t < T; ++t) {
      CMat sym = (speech.mats[f][t] + speech.mats[f][t].adjoint()) / 2.0;
      EigResult eig = principal_eigenvector(sym);
      if (!eig.converged && stalled) ++(*stalled);
      CVec v = eig.vec;
      if (std::abs(v(ref)) > 1e-8) v /= v(ref);
      CMat P = regularized_inverse(undesired.mats[f][t], loading);
      CVec pv = P * v;
      cplx den = (v.adjoint() * pv)(0, 0);
      if (std::abs(den) < 1e-300) throw NumericError("vanishing beamformer denominator");
      w.w[f].col(t) = pv / den;
    }
  }
  return w;
}

struct BeamformOutput {
  MultiChannelSpectrogram separated;
  BeamformerWeights weights;  // empty for the streaming network path
  bool has_weights = false;
  std::string provenance;
  int stalled_eigs = 0;
  int degenerate_bins = 0;
};

BeamformOutput run_beamform(const RunConfig &cfg, const MultiChannelSpectrogram &mix,
                            const EstimateResult &est, int ref_pos) {
  BeamformOutput out;
  out.provenance = est.provenance;
  CMat empty_mask;
  if (cfg.mode == "mvdr-chunk" || cfg.mode == "mvdr-recursive") {
    CovarianceSequence cs, cn;
    if (cfg.mode == "mvdr-chunk") {
      cs = chunk_covariance(est.speech, est.ref_mask);
      cn = chunk_covariance(est.undesired, empty_mask);
    } else {
      cs = recursive_covariance(est.speech, est.ref_mask, cfg.rec_block, cfg.rec_hop,
                                cfg.rec_forgetting);
      cn = recursive_covariance(est.undesired, empty_mask, cfg.rec_block, cfg.rec_hop,
                                cfg.rec_forgetting);
    }
    for (uint8_t d : cs.degenerate) out.degenerate_bins += d;
    if (cfg.weight_rule == "eigenvector") {
      out.weights = eigenvector_weights(cs, cn, ref_pos, cfg.loading, &out.stalled_eigs);
    } else {
      out.weights = mvdr_reference_channel(cn, cs, ref_pos, cfg.loading);
    }
    out.has_weights = true;
    out.separated = apply_weights(out.weights, mix);
  } else if (cfg.mode == "mf-mvdr") {
    MultiChannelSpectrogram sp = stack_multiframe(single_channel(est.speech, ref_pos),
                                                  cfg.mf_l1, cfg.mf_l2);
    MultiChannelSpectrogram un = stack_multiframe(single_channel(est.undesired, ref_pos),
                                                  cfg.mf_l1, cfg.mf_l2);
    MultiChannelSpectrogram my = stack_multiframe(single_channel(mix, ref_pos),
                                                  cfg.mf_l1, cfg.mf_l2);
    CovarianceSequence cs, cn;
    if (cfg.mf_covariance == "chunk") {
      cs = chunk_covariance(sp, est.ref_mask, CovLayout::kMF);
      cn = chunk_covariance(un, empty_mask, CovLayout::kMF);
    } else {
      cs = recursive_covariance(sp, est.ref_mask, cfg.rec_block, cfg.rec_hop,
                                cfg.rec_forgetting, CovLayout::kMF);
      cn = recursive_covariance(un, empty_mask, cfg.rec_block, cfg.rec_hop,
                                cfg.rec_forgetting, CovLayout::kMF);
    }
    for (uint8_t d : cs.degenerate) out.degenerate_bins += d;
    IfcVector ifc = ifc_vector(cs, cfg.mf_l1 - 1);
    out.weights = mf_mvdr(cn, ifc, cfg.loading);
    out.has_weights = true;
    out.separated = apply_weights(out.weights, my);
  } else if (cfg.mode == "adl-mvdr") {
    if (cfg.adl_inv_net.empty() || cfg.adl_v_net.empty())
      fail_config("adl-mvdr needs adl.inv_net and adl.v_net weight files");
    AdlMvdrConfig acfg;
    acfg.mode = cfg.adl_mode == "mc"
                    ? CovLayout::kMC
                    : (cfg.adl_mode == "mf" ? CovLayout::kMF : CovLayout::kMCMF);
    if (cfg.adl_mode != "mc" && cfg.adl_mode != "mf" && cfg.adl_mode != "mcmf")
      fail_config("adl.mode must be mc, mf or mcmf");
    acfg.channels = mix.channel_count();
    acfg.l1 = cfg.mf_l1;
    acfg.l2 = cfg.mf_l2;
    if (acfg.mode == CovLayout::kMC) {
      acfg.l1 = 1;
      acfg.l2 = 0;
    }
    acfg.reference_channel = ref_pos;
    acfg.inv_hidden = cfg.adl_inv_hidden;
    acfg.v_hidden = cfg.adl_v_hidden;
    GruNetParams inv_net = read_gru_params(cfg.adl_inv_net);
    GruNetParams v_net = read_gru_params(cfg.adl_v_net);
    out.separated = adl_mvdr_separate(mix, est.speech, est.undesired, inv_net, v_net, acfg);
    out.provenance += ";nets:" + cfg.adl_inv_net + "," + cfg.adl_v_net;
  } else {
    fail_config("unknown mode " + cfg.mode);
  }
  return out;
}

// Weight dump reuses the spectrogram container: channel d holds the complex
// weight for tap d, frames x bins.
void write_weights(const BeamformerWeights &w, const StftConfig &scfg,
                   const std::string &path) {
  MultiChannelSpectrogram dump;
  dump.cfg = scfg;
  dump.channels.assign(w.dim, CMat(w.frames(), w.bins()));
  for (int d = 0; d < w.dim; ++d)
    for (int f = 0; f < w.bins(); ++f)
      for (int t = 0; t < w.frames(); ++t) dump.channels[d](t, f) = w.w[f](d, t);
  write_spectrogram(dump, path);
}

BeamformerWeights read_weights(const std::string &path, CovLayout layout) {
  MultiChannelSpectrogram dump = read_spectrogram(path);
  BeamformerWeights w;
  w.layout = layout;
  w.dim = dump.channel_count();
  w.w.assign(dump.bin_count(), CMat(w.dim, dump.frame_count()));
  for (int f = 0; f < dump.bin_count(); ++f)
    for (int t = 0; t < dump.frame_count(); ++t)
      for (int d = 0; d < w.dim; ++d) w.w[f](d, t) = dump.channels[d](t, f);
  return w;
}

// ---------------------------------------------------------------------------
// Commands.

int cmd_simulate(const RunConfig &cfg) {
  fs::create_directories(cfg.out_dir);
  json manifest;
  manifest["command"] = "simulate";
  manifest["config_hash"] = hash_hex(cfg.raw);
  manifest["scene_count"] = cfg.scene.count;
  json scenes = json::array();
  for (int i = 0; i < cfg.scene.count; ++i) {
    SceneRecord rec = draw_scene(cfg, i);
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "scene_%03d", i);
    std::string id = idbuf;
    fs::path dir = fs::path(cfg.out_dir) / id;
    fs::create_directories(dir);
    MixtureComponents mixed = synthesize_scene(cfg, rec.scene);
    write_wav(mixed.mixture, (dir / "mixture.wav").string());
    write_wav(mixed.target, (dir / "target.wav").string());
    write_wav(mixed.interference, (dir / "interference.wav").string());
    write_wav(mixed.noise, (dir / "noise.wav").string());
    json meta = scene_meta(cfg, rec.scene, i, id);
    write_manifest((dir / "scene.json").string(), meta);
    scenes.push_back(meta);
    std::cout << id << ": rt60 " << rec.scene.rt60 << " s, speakers "
              << rec.scene.source_count() << "\n";
  }
  manifest["scenes"] = scenes;
  write_manifest((fs::path(cfg.out_dir) / "manifest.json").string(), manifest);
  std::cout << "wrote " << cfg.scene.count << " scenes to " << cfg.out_dir << "\n";
  return 0;
}

int cmd_features(const RunConfig &cfg, const std::string &scene_dir,
                 const std::string &input_wav, double theta_flag) {
  fs::create_directories(cfg.out_dir);
  TimeSignal sig;
  double theta = theta_flag;
  if (!scene_dir.empty()) {
    SceneData sd = load_scene(scene_dir);
    sig = sd.mixture;
    if (theta < 0.0) theta = sd.meta.at("target_doa_deg").get<double>();
  } else if (!input_wav.empty()) {
    sig = read_wav(input_wav);
  } else {
    fail_config("features: pass --scene or --input");
  }
  if (theta < 0.0) fail_config("features: target direction unknown; pass --theta-deg");

  StftConfig scfg;
  scfg.sample_rate = sig.sample_rate;
  MultiChannelSpectrogram spec = stft(sig, scfg);
  ArrayGeometry geom = ArrayGeometry::linear15();
  if (sig.channels() != geom.channels())
    fail_config("features: expected a 15-channel recording");

  FeaturePack fp = compute_features(spec, theta, geom, default_pairs(),
                                    geom.reference_channel);
  write_matrix(fp.lps, (fs::path(cfg.out_dir) / "lps.bin").string());
  json pair_list = json::array();
  for (size_t p = 0; p < fp.ipd.size(); ++p) {
    char name[32];
    std::snprintf(name, sizeof(name), "ipd_%zu.bin", p);
    write_matrix(fp.ipd[p], (fs::path(cfg.out_dir) / name).string());
    pair_list.push_back({fp.pair_list[p].first, fp.pair_list[p].second});
  }
  write_matrix(fp.df, (fs::path(cfg.out_dir) / "df.bin").string());

  json manifest;
  manifest["command"] = "features";
  manifest["config_hash"] = hash_hex(cfg.raw);
  manifest["theta_deg"] = theta;
  manifest["pairs"] = pair_list;
  manifest["frames"] = spec.frame_count();
  manifest["bins"] = spec.bin_count();
  manifest["files"] = {"lps.bin", "df.bin"};
  write_manifest((fs::path(cfg.out_dir) / "features.json").string(), manifest);
  std::cout << "features: " << spec.frame_count() << " frames, " << spec.bin_count()
            << " bins, " << fp.ipd.size() << " pairs\n";
  return 0;
}

int cmd_beamform(const RunConfig &cfg, const std::string &scene_dir) {
  if (scene_dir.empty()) fail_config("beamform: pass --scene");
  fs::create_directories(cfg.out_dir);
  SceneData sd = load_scene(scene_dir);
  ArrayGeometry geom = subset_geometry(cfg);
  TimeSignal mix = select_channels(sd.mixture, cfg.channels);
  TimeSignal tgt = select_channels(sd.target, cfg.channels);

  StftConfig scfg;
  scfg.sample_rate = mix.sample_rate;
  MultiChannelSpectrogram mix_spec = stft(mix, scfg);
  MultiChannelSpectrogram tgt_spec = stft(tgt, scfg);
  EstimateResult est = estimate_components(cfg, mix_spec, tgt_spec,
                                           geom.reference_channel);
  BeamformOutput bf = run_beamform(cfg, mix_spec, est, geom.reference_channel);

  TimeSignal sep = istft(bf.separated, scfg, mix.length());
  fs::path out(cfg.out_dir);
  write_wav(sep, (out / "separated.wav").string());

  json manifest;
  manifest["command"] = "beamform";
  manifest["config_hash"] = hash_hex(cfg.raw);
  manifest["scene"] = scene_dir;
  manifest["mode"] = cfg.mode;
  manifest["estimator_provenance"] = bf.provenance;
  manifest["channels"] = cfg.channels;
  manifest["reference_channel"] = cfg.reference_channel;
  manifest["stalled_eigenvectors"] = bf.stalled_eigs;
  manifest["degenerate_bins"] = bf.degenerate_bins;
  manifest["separated"] = "separated.wav";
  if (bf.has_weights) {
    write_weights(bf.weights, scfg, (out / "weights.bin").string());
    manifest["weights"] = "weights.bin";
    manifest["weight_layout"] = to_string(bf.weights.layout);
    manifest["weight_dim"] = bf.weights.dim;
    manifest["weight_frames"] = bf.weights.frames();
  }
  write_manifest((out / "beamform.json").string(), manifest);
  std::cout << "beamform " << cfg.mode << " [" << bf.provenance << "] -> "
            << (out / "separated.wav").string() << "\n";
  return 0;
}

MetricRow make_row(const std::string &scene_id, const std::string &label,
                   const Vec &estimate, const Vec &reference, int speakers,
                   double min_angle) {
  MetricRow row;
  row.scene_id = scene_id;
  row.mode = label;
  row.si_snr_db = si_snr_db(estimate, reference);
  row.snr_db = snr_db(estimate, reference);
  row.sdr_proxy_db = sdr_proxy_db(estimate, reference);
  row.speaker_count = speakers;
  row.min_interferer_angle_deg = min_angle;
  return row;
}

int cmd_metrics(const RunConfig &cfg, const std::string &estimate_path,
                const std::string &reference_path, const std::string &mixture_path,
                const std::string &scene_dir, const std::string &label) {
  if (estimate_path.empty()) fail_config("metrics: pass --estimate");
  fs::create_directories(cfg.out_dir);

  std::string scene_id = "pair";
  int speakers = 1;
  double min_angle = -1.0;
  std::string ref_path = reference_path;
  if (!scene_dir.empty()) {
    json meta = load_json_file((fs::path(scene_dir) / "scene.json").string());
    scene_id = meta.at("id").get<std::string>();
    speakers = meta.at("speakers").get<int>();
    min_angle = meta.at("min_interferer_angle_deg").get<double>();
    if (ref_path.empty()) ref_path = (fs::path(scene_dir) / "target.wav").string();
  }
  if (ref_path.empty()) fail_config("metrics: pass --reference or --scene");

  TimeSignal est = read_wav(estimate_path);
  TimeSignal ref = read_wav(ref_path);
  int ref_row = ref.channels() > cfg.reference_channel ? cfg.reference_channel : 0;
  Eigen::Index n = std::min(est.length(), ref.length());
  Vec e = est.samples.row(0).head(n).transpose();
  Vec r = ref.samples.row(ref_row).head(n).transpose();

  std::vector<MetricRow> rows;
  rows.push_back(make_row(scene_id, label, e, r, speakers, min_angle));
  if (!mixture_path.empty()) {
    TimeSignal mix = read_wav(mixture_path);
    int mix_row = mix.channels() > cfg.reference_channel ? cfg.reference_channel : 0;
    Eigen::Index nm = std::min(n, mix.length());
    Vec m = mix.samples.row(mix_row).head(nm).transpose();
    rows.push_back(make_row(scene_id, "mixture", m, r.head(nm), speakers, min_angle));
  }
  MetricReport report = aggregate_report(rows);
  fs::path out(cfg.out_dir);
  write_report_csv(report, (out / "report.csv").string());
  write_text_atomic((out / "report.txt").string(), render_report(report));

  json manifest;
  manifest["command"] = "metrics";
  manifest["config_hash"] = hash_hex(cfg.raw);
  manifest["estimate"] = estimate_path;
  manifest["reference"] = ref_path;
  manifest["rows"] = rows.size();
  manifest["mean_si_snr_db"] = report.mean_si_snr_db;
  write_manifest((out / "metrics.json").string(), manifest);
  std::cout << render_report(report);
  return 0;
}

int cmd_train_gru(const RunConfig &cfg) {
  fs::create_directories(cfg.out_dir);
  const TrainOptions &t = cfg.train;
  if (t.target != "inverse" && t.target != "vector")
    fail_config("train.target must be inverse or vector");

  std::vector<Mat> inputs, targets;
  int dim = 0;
  if (t.source == "synthetic") {
    SyntheticCovConfig sc;
    sc.frames = t.frames;
    sc.k_snapshots = t.k_snapshots;
    sc.gap_lo = t.gap_lo;
    sc.gap_hi = t.gap_hi;
    sc.diag_load = t.diag_load;
    sc.forgetting = t.forgetting;
    sc.loading = cfg.loading;
    dim = sc.dim;
    Rng base(cfg.seed);
    inputs.assign(t.frames, Mat(2 * dim * dim, t.streams));
    int out_dim = t.target == "inverse" ? 2 * dim * dim : 2 * dim;
    targets.assign(t.frames, Mat(out_dim, t.streams));
    for (int s = 0; s < t.streams; ++s) {
      Rng r = base.derive(0x74726e00ULL + static_cast<uint64_t>(s));
      CovStreamSample smp = make_synthetic_cov_stream(sc, &r);
      for (int fr = 0; fr < t.frames; ++fr) {
        inputs[fr].col(s) = pack_covariance(smp.phis[fr]);
        targets[fr].col(s) = t.target == "inverse"
                                 ? pack_covariance(smp.inv_targets[fr])
                                 : pack_vector(smp.vec_targets[fr]);
      }
    }
  } else if (t.source == "scene") {
    if (t.scene_dir.empty()) fail_config("train.source=scene needs train.scene_dir");
    SceneData sd = load_scene(t.scene_dir);
    ArrayGeometry geom = subset_geometry(cfg);
    dim = geom.channels();
    TimeSignal mix = select_channels(sd.mixture, cfg.channels);
    TimeSignal tgt = select_channels(sd.target, cfg.channels);
    StftConfig scfg;
    scfg.sample_rate = mix.sample_rate;
    MultiChannelSpectrogram mix_spec = stft(mix, scfg);
    MultiChannelSpectrogram tgt_spec = stft(tgt, scfg);
    EstimateResult est = estimate_components(cfg, mix_spec, tgt_spec,
                                             geom.reference_channel);
    const MultiChannelSpectrogram &comp =
        t.target == "vector" ? est.speech : est.undesired;
    CMat empty_mask;
    CovarianceSequence frames_cov = framewise_covariance(comp, empty_mask);
    CovarianceSequence smooth = recursive_covariance(comp, empty_mask, cfg.rec_block,
                                                     cfg.rec_hop, cfg.rec_forgetting);
    int T = frames_cov.frames();
    if (t.max_frames > 0) T = std::min(T, t.max_frames);
    const int F = frames_cov.bins();
    inputs.assign(T, Mat(2 * dim * dim, F));
    int out_dim = t.target == "inverse" ? 2 * dim * dim : 2 * dim;
    targets.assign(T, Mat(out_dim, F));
    for (int f = 0; f < F; ++f) {
      for (int fr = 0; fr < T; ++fr) {
        inputs[fr].col(f) = pack_covariance(frames_cov.mats[f][fr]);
        if (t.target == "inverse") {
          targets[fr].col(f) =
              pack_covariance(regularized_inverse(smooth.mats[f][fr], cfg.loading));
        } else {
          CMat sym = (smooth.mats[f][fr] + smooth.mats[f][fr].adjoint()) / 2.0;
          targets[fr].col(f) = pack_vector(principal_eigenvector(sym).vec);
        }
      }
    }
  } else {
    fail_config("train.source must be synthetic or scene");
  }

  int out_dim = t.target == "inverse" ? 2 * dim * dim : 2 * dim;
  Rng init_rng = Rng(cfg.seed).derive(t.target == "inverse" ? 0x696e76ULL : 0x766563ULL);
  GruNetParams net = make_gru_net(2 * dim * dim, t.hidden, out_dim, &init_rng);
  net.tag = t.target;

  fs::path out(cfg.out_dir);
  std::string log_path = (out / (t.out_prefix + "_log.csv")).string();
  GruTrainConfig gtc;
  gtc.learning_rate = t.learning_rate;
  gtc.momentum = t.momentum;
  gtc.steps = t.steps;
  gtc.warmup_frames = t.warmup;
  gtc.log_path = log_path;
  GruTrainResult res = train_gru_supervised(net, inputs, targets, gtc);

  std::string net_path = (out / (t.out_prefix + ".net")).string();
  write_gru_params(res.params, net_path);

  json manifest;
  manifest["command"] = "train-gru";
  manifest["config_hash"] = hash_hex(cfg.raw);
  manifest["target"] = t.target;
  manifest["source"] = t.source;
  manifest["dim"] = dim;
  manifest["steps"] = t.steps;
  manifest["final_loss"] = res.final_loss;
  manifest["net"] = net_path;
  manifest["log"] = log_path;
  manifest["estimator_provenance"] =
      t.source == "synthetic" ? "synthetic-cov-stream" : cfg.estimator;
  write_manifest((out / "train.json").string(), manifest);
  std::cout << "train-gru " << t.target << ": final loss " << res.final_loss << " -> "
            << net_path << "\n";
  return 0;
}

int cmd_beampattern(const RunConfig &cfg, const std::string &weights_path,
                    const std::string &meta_path, double f_hz, int frame,
                    double step_deg) {
  if (weights_path.empty()) fail_config("beampattern: pass --weights");
  fs::create_directories(cfg.out_dir);
  std::vector<int> channels = cfg.channels;
  if (!meta_path.empty()) {
    json meta = load_json_file(meta_path);
    if (meta.contains("channels")) {
      channels.clear();
      for (const json &v : meta["channels"]) channels.push_back(v.get<int>());
    }
    if (meta.contains("weight_layout") &&
        meta["weight_layout"].get<std::string>() != std::string("MC"))
      fail_config("beampattern: weights are not per-channel weights");
  }
  RunConfig sub = cfg;
  sub.channels = channels;
  ArrayGeometry geom = subset_geometry(sub);
  BeamformerWeights w = read_weights(weights_path, CovLayout::kMC);
  if (w.dim != geom.channels())
    fail_config("beampattern: weight dim does not match channel subset");

  if (step_deg <= 0.0) fail_config("beampattern: step must be positive");
  int points = static_cast<int>(std::floor(180.0 / step_deg)) + 1;
  Vec angles(points);
  for (int i = 0; i < points; ++i) angles(i) = i * step_deg;
  StftConfig scfg;
  Vec gains = beam_pattern(w, geom, f_hz, frame, angles, scfg);

  fs::path out(cfg.out_dir);
  std::string csv = "angle_deg,gain_db\n";
  char buf[64];
  for (int i = 0; i < points; ++i) {
    std::snprintf(buf, sizeof(buf), "%.3f,%.6f\n", angles(i), gains(i));
    csv += buf;
  }
  write_text_atomic((out / "pattern.csv").string(), csv);

  json manifest;
  manifest["command"] = "beampattern";
  manifest["config_hash"] = hash_hex(cfg.raw);
  manifest["weights"] = weights_path;
  manifest["f_hz"] = f_hz;
  manifest["frame"] = frame;
  manifest["points"] = points;
  manifest["pattern"] = "pattern.csv";
  write_manifest((out / "beampattern.json").string(), manifest);
  std::cout << "beampattern: " << points << " points -> "
            << (out / "pattern.csv").string() << "\n";
  return 0;
}

int cmd_sweep(const RunConfig &cfg, const std::string &scenes_path,
              const std::string &axis, const std::string &grid_json) {
  if (scenes_path.empty()) fail_config("sweep: pass --scenes (simulate manifest)");
  if (axis != "crf-size" && axis != "mf-size" && axis != "channels")
    fail_config("sweep: axis must be crf-size, mf-size or channels");
  json grid;
  if (!grid_json.empty()) {
    grid = json::parse(grid_json, nullptr, false);
    if (grid.is_discarded()) fail_config("sweep: --grid is not valid JSON");
  } else if (cfg.raw.contains("sweep")) {
    check_keys(cfg.raw["sweep"], {"axis", "grid"}, "sweep");
    grid = cfg.raw["sweep"].value("grid", json::array());
  }
  if (!grid.is_array() || grid.empty()) fail_config("sweep: empty grid");

  json scene_manifest = load_json_file(scenes_path);
  fs::path scene_root = fs::path(scenes_path).parent_path();
  fs::create_directories(cfg.out_dir);

  std::vector<MetricRow> rows;
  json points = json::array();
  for (size_t gi = 0; gi < grid.size(); ++gi) {
    RunConfig point = cfg;
    std::string label;
    const json &g = grid[gi];
    if (axis == "crf-size") {
      std::vector<int> v = parse_int_list(g, "sweep grid entry");
      if (v.size() != 4) fail_config("sweep: crf-size entries are [j1,j2,k1,k2]");
      point.crf_j1 = v[0];
      point.crf_j2 = v[1];
      point.crf_k1 = v[2];
      point.crf_k2 = v[3];
      point.estimator = "oracle-crf";
      char buf[64];
      std::snprintf(buf, sizeof(buf), "crf[%d,%d,%d,%d]", v[0], v[1], v[2], v[3]);
      label = buf;
    } else if (axis == "mf-size") {
      std::vector<int> v = parse_int_list(g, "sweep grid entry");
      if (v.size() != 2) fail_config("sweep: mf-size entries are [l1,l2]");
      point.mf_l1 = v[0];
      point.mf_l2 = v[1];
      point.mode = "mf-mvdr";
      label = "mf[" + std::to_string(v[0]) + "," + std::to_string(v[1]) + "]";
    } else {
      point.channels = parse_channels(g);
      label = "ch" + std::to_string(point.channels.size());
    }

    double mean_si = 0.0;
    int n = 0;
    for (const json &meta : scene_manifest.at("scenes")) {
      std::string dir = (scene_root / meta.at("id").get<std::string>()).string();
      SceneData sd = load_scene(dir);
      ArrayGeometry geom = subset_geometry(point);
      TimeSignal mix = select_channels(sd.mixture, point.channels);
      TimeSignal tgt = select_channels(sd.target, point.channels);
      StftConfig scfg;
      scfg.sample_rate = mix.sample_rate;
      MultiChannelSpectrogram mix_spec = stft(mix, scfg);
      MultiChannelSpectrogram tgt_spec = stft(tgt, scfg);
      EstimateResult est = estimate_components(point, mix_spec, tgt_spec,
                                               geom.reference_channel);
      BeamformOutput bf = run_beamform(point, mix_spec, est, geom.reference_channel);
      TimeSignal sep = istft(bf.separated, scfg, mix.length());
      Vec e = sep.samples.row(0).transpose();
      Vec r = tgt.samples.row(geom.reference_channel).transpose();
      MetricRow row = make_row(meta.at("id").get<std::string>(), label, e, r,
                               meta.at("speakers").get<int>(),
                               meta.at("min_interferer_angle_deg").get<double>());
      rows.push_back(row);
      mean_si += row.si_snr_db;
      ++n;
    }
    json pt;
    pt["label"] = label;
    pt["grid"] = g;
    pt["mean_si_snr_db"] = n > 0 ? mean_si / n : 0.0;
    points.push_back(pt);
    std::cout << label << ": mean si_snr " << (n > 0 ? mean_si / n : 0.0) << " dB over "
              << n << " scenes\n";
  }

  MetricReport report = aggregate_report(rows);
  fs::path out(cfg.out_dir);
  write_report_csv(report, (out / "sweep.csv").string());
  write_text_atomic((out / "sweep.txt").string(), render_report(report));
  json manifest;
  manifest["command"] = "sweep";
  manifest["config_hash"] = hash_hex(cfg.raw);
  manifest["axis"] = axis;
  manifest["points"] = points;
  manifest["scenes"] = scenes_path;
  manifest["estimator_provenance"] = cfg.estimator;
  write_manifest((out / "sweep.json").string(), manifest);
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"mcbeam: microphone-array separation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand

  std::string config_path, out_flag;
  std::vector<std::string> sets;
  uint64_t seed_flag = 0;
  bool seed_set = false;
  app.add_option("--config", config_path, "JSON config file")->envname("MCBEAM_CONFIG");
  app.add_option("--set", sets, "Override config entries, key.path=value")
      ->take_all();
  auto *seed_opt = app.add_option("--seed", seed_flag, "Seed override");
  app.add_option("--out", out_flag, "Output directory override");

  auto *sim = app.add_subcommand("simulate", "Synthesize seeded scenes");
  int count_flag = 0;
  sim->add_option("--count", count_flag, "Number of scenes");

  auto *feat = app.add_subcommand("features", "Dump spectral and spatial features");
  std::string feat_scene, feat_input;
  double theta_flag = -1.0;
  feat->add_option("--scene", feat_scene, "Scene directory from simulate");
  feat->add_option("--input", feat_input, "Raw multichannel WAV");
  feat->add_option("--theta-deg", theta_flag, "Target direction in degrees");

  auto *bf = app.add_subcommand("beamform", "Separate one scene");
  std::string bf_scene;
  bf->add_option("--scene", bf_scene, "Scene directory from simulate")->required();

  auto *met = app.add_subcommand("metrics", "Score an estimate against a reference");
  std::string met_est, met_ref, met_mix, met_scene, met_label = "estimate";
  met->add_option("--estimate", met_est, "Estimated WAV")->required();
  met->add_option("--reference", met_ref, "Reference WAV");
  met->add_option("--mixture", met_mix, "Unprocessed mixture WAV for a baseline row");
  met->add_option("--scene", met_scene, "Scene directory (reference + metadata)");
  met->add_option("--label", met_label, "Row label");

  auto *tg = app.add_subcommand("train-gru", "Train a coefficient net");

  auto *bp = app.add_subcommand("beampattern", "Export a spatial response CSV");
  std::string bp_weights, bp_meta;
  double bp_fhz = 1000.0, bp_step = 1.0;
  int bp_frame = 0;
  bp->add_option("--weights", bp_weights, "Weight dump from beamform")->required();
  bp->add_option("--meta", bp_meta, "beamform.json next to the weights");
  bp->add_option("--f-hz", bp_fhz, "Analysis frequency in Hz");
  bp->add_option("--frame", bp_frame, "Frame index for per-frame weights");
  bp->add_option("--step-deg", bp_step, "Angle grid step");

  auto *sw = app.add_subcommand("sweep", "Ablation sweep over one axis");
  std::string sw_scenes, sw_axis = "crf-size", sw_grid;
  sw->add_option("--scenes", sw_scenes, "simulate manifest.json")->required();
  sw->add_option("--axis", sw_axis, "crf-size | mf-size | channels");
  sw->add_option("--grid", sw_grid, "Grid as JSON, e.g. [[1,1,1,1],[2,2,2,2]]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    seed_set = seed_opt->count() > 0;
    RunConfig cfg = load_run_config(config_path, sets, seed_flag, seed_set, out_flag);
    if (sim->parsed()) {
      if (count_flag > 0) cfg.scene.count = count_flag;
      return cmd_simulate(cfg);
    }
    if (feat->parsed()) return cmd_features(cfg, feat_scene, feat_input, theta_flag);
    if (bf->parsed()) return cmd_beamform(cfg, bf_scene);
    if (met->parsed())
      return cmd_metrics(cfg, met_est, met_ref, met_mix, met_scene, met_label);
    if (tg->parsed()) return cmd_train_gru(cfg);
    if (bp->parsed())
      return cmd_beampattern(cfg, bp_weights, bp_meta, bp_fhz, bp_frame, bp_step);
    if (sw->parsed()) return cmd_sweep(cfg, sw_scenes, sw_axis, sw_grid);
    fail_config("no subcommand");
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError &e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const IoError &e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
