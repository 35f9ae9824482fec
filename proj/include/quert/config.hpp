#pragma once

// Plain-text key=value configuration files. Lines starting with '#' and blank
// lines are ignored. Unknown keys are an error so typos fail fast.

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "quert/corpus.hpp"
#include "quert/model.hpp"
#include "quert/taskgen.hpp"
#include "quert/train.hpp"

namespace quert {

using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_key_values(std::istream& in) {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": missing '='");
    auto trim = [](std::string s) {
      std::size_t a = s.find_first_not_of(" \t");
      std::size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    if (key.empty())
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
    if (kv.count(key))
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": duplicate key '" +
                                  key + "'");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline KeyValues load_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  return parse_key_values(in);
}

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config key '" + key + "': expected bool, got '" + v + "'");
}

template <class T>
T parse_num(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T out;
  is >> out;
  if (is.fail() || !is.eof())
    throw std::invalid_argument("config key '" + key + "': cannot parse '" + v + "'");
  return out;
}

}  // namespace detail

// Everything a run needs, with the same defaults as the component structs.
struct RunConfig {
  SynthConfig synth;
  TaskGenConfig taskgen;
  EncoderConfig model;
  TrainConfig train;

  void validate() const {
    synth.validate();
    taskgen.validate();
    // vocab_size is filled in from the built vocabulary, not the config file.
    EncoderConfig mc = model;
    if (mc.vocab_size == 0) mc.vocab_size = 1;
    mc.validate();
    train.validate();
  }
};

inline RunConfig run_config_from_key_values(const KeyValues& kv) {
  RunConfig c;
  using detail::parse_bool;
  using detail::parse_num;
  for (const auto& [key, v] : kv) {
    // synth.*
    if (key == "synth.n_cities") c.synth.n_cities = parse_num<int>(key, v);
    else if (key == "synth.n_pois_per_city") c.synth.n_pois_per_city = parse_num<int>(key, v);
    else if (key == "synth.n_intents") c.synth.n_intents = parse_num<int>(key, v);
    else if (key == "synth.n_pairs") c.synth.n_pairs = parse_num<int>(key, v);
    else if (key == "synth.queries_per_item_min") c.synth.queries_per_item_min = parse_num<int>(key, v);
    else if (key == "synth.queries_per_item_max") c.synth.queries_per_item_max = parse_num<int>(key, v);
    else if (key == "synth.misinput_rate") c.synth.misinput_rate = parse_num<double>(key, v);
    else if (key == "synth.geo_query_rate") c.synth.geo_query_rate = parse_num<double>(key, v);
    else if (key == "synth.item_geo_none") c.synth.item_geo_none = parse_num<double>(key, v);
    else if (key == "synth.item_geo_one") c.synth.item_geo_one = parse_num<double>(key, v);
    else if (key == "synth.seed") c.synth.seed = parse_num<std::uint64_t>(key, v);
    // taskgen.*
    else if (key == "taskgen.max_joint_len") c.taskgen.max_joint_len = parse_num<int>(key, v);
    else if (key == "taskgen.max_query_len") c.taskgen.max_query_len = parse_num<int>(key, v);
    else if (key == "taskgen.q_max") c.taskgen.q_max = parse_num<int>(key, v);
    else if (key == "taskgen.r_max") c.taskgen.r_max = parse_num<int>(key, v);
    else if (key == "taskgen.n_geohash") c.taskgen.n_geohash = parse_num<int>(key, v);
    else if (key == "taskgen.click_group_k") c.taskgen.click_group_k = parse_num<int>(key, v);
    else if (key == "taskgen.p_mask_geo_both") c.taskgen.p_mask_geo_both = parse_num<double>(key, v);
    else if (key == "taskgen.p_mask_geo_one") c.taskgen.p_mask_geo_one = parse_num<double>(key, v);
    else if (key == "taskgen.p_mask_other") c.taskgen.p_mask_other = parse_num<double>(key, v);
    else if (key == "taskgen.token_shuffle_p") c.taskgen.token_shuffle_p = parse_num<double>(key, v);
    else if (key == "taskgen.xor_geo_both") c.taskgen.xor_geo_both = parse_bool(key, v);
    // model.*
    else if (key == "model.d_model") c.model.d_model = parse_num<int>(key, v);
    else if (key == "model.n_layers") c.model.n_layers = parse_num<int>(key, v);
    else if (key == "model.n_heads") c.model.n_heads = parse_num<int>(key, v);
    else if (key == "model.d_ff") c.model.d_ff = parse_num<int>(key, v);
    else if (key == "model.max_len") c.model.max_len = parse_num<int>(key, v);
    else if (key == "model.dropout") c.model.dropout = parse_num<double>(key, v);
    else if (key == "model.n_geohash") c.model.n_geohash = parse_num<int>(key, v);
    else if (key == "model.q_max") c.model.q_max = parse_num<int>(key, v);
    else if (key == "model.r_max") c.model.r_max = parse_num<int>(key, v);
    else if (key == "model.tau") c.model.tau = parse_num<double>(key, v);
    else if (key == "model.ucbl_literal_denominator") c.model.ucbl_literal_denominator = parse_bool(key, v);
    else if (key == "model.ptop_token_head_reads_hidden") c.model.ptop_token_head_reads_hidden = parse_bool(key, v);
    // train.*
    else if (key == "train.learning_rate") c.train.learning_rate = parse_num<double>(key, v);
    else if (key == "train.weight_decay") c.train.weight_decay = parse_num<double>(key, v);
    else if (key == "train.clip_norm") c.train.clip_norm = parse_num<double>(key, v);
    else if (key == "train.batch_size") c.train.batch_size = parse_num<int>(key, v);
    else if (key == "train.total_steps") c.train.total_steps = parse_num<int>(key, v);
    else if (key == "train.checkpoint_interval") c.train.checkpoint_interval = parse_num<int>(key, v);
    else if (key == "train.seed") c.train.seed = parse_num<std::uint64_t>(key, v);
    else if (key == "train.geo_mp") c.train.tasks.geo_mp = parse_bool(key, v);
    else if (key == "train.geo_cp") c.train.tasks.geo_cp = parse_bool(key, v);
    else if (key == "train.ucbl") c.train.tasks.ucbl = parse_bool(key, v);
    else if (key == "train.ptop") c.train.tasks.ptop = parse_bool(key, v);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  return run_config_from_key_values(load_key_values(path));
}

}  // namespace quert
