// Command-line front end: corpus synthesis, preparation, training, ablation,
// evaluation, and representation probes.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <quert/checkpoint.hpp>
#include <quert/config.hpp>
#include <quert/corpus.hpp>
#include <quert/eval.hpp>
#include <quert/model.hpp>
#include <quert/taskgen.hpp>
#include <quert/text.hpp>
#include <quert/train.hpp>

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "key=value configuration file");
  cmd->add_option("--seed", o.seed, "seed override for this command");
  cmd->add_option("--out-dir", o.out_dir, "output directory");
}

quert::RunConfig load_config(const CommonOpts& o) {
  quert::RunConfig cfg;
  if (!o.config_path.empty()) cfg = quert::load_run_config(o.config_path);
  if (o.seed) {
    cfg.synth.seed = *o.seed;
    cfg.train.seed = *o.seed;
  }
  return cfg;
}

void ensure_out_dir(const CommonOpts& o) { std::filesystem::create_directories(o.out_dir); }

struct Prepared {
  quert::Gazetteer gaz;
  std::vector<quert::QueryClickPair> pairs;
  quert::Vocab vocab;
};

Prepared load_prepared(const std::string& gaz_path, const std::string& corpus_path,
                       const std::string& vocab_path) {
  Prepared p;
  p.gaz = quert::load_gazetteer(gaz_path);
  p.pairs = quert::load_corpus(corpus_path);
  p.vocab = quert::Vocab::load(vocab_path);
  return p;
}

int run_synth(const CommonOpts& o) {
  auto cfg = load_config(o);
  ensure_out_dir(o);
  quert::Gazetteer gaz = quert::generate_gazetteer(cfg.synth, quert::RngStream(cfg.synth.seed));
  auto pairs = quert::synthesize_corpus(cfg.synth, gaz);
  quert::save_gazetteer(gaz, o.out_dir + "/gazetteer.tsv");
  quert::save_corpus(pairs, o.out_dir + "/corpus.jsonl");
  std::cout << "wrote " << gaz.entries().size() << " gazetteer entries and " << pairs.size()
            << " query/click pairs to " << o.out_dir << "\n";
  return 0;
}

int run_prep(const CommonOpts& o, const std::string& gaz_path, const std::string& corpus_path,
             std::size_t top_n) {
  ensure_out_dir(o);
  quert::Gazetteer gaz = quert::load_gazetteer(gaz_path);
  auto pairs = quert::load_corpus(corpus_path);
  if (top_n > 0 && top_n < pairs.size()) pairs = quert::filter_top(pairs, top_n);
  quert::Vocab vocab = quert::build_vocab(pairs);
  quert::save_corpus(pairs, o.out_dir + "/corpus_prepared.jsonl");
  vocab.save(o.out_dir + "/vocab.txt");
  auto groups = quert::build_click_groups(pairs, 1 << 20);
  std::cout << "prepared " << pairs.size() << " pairs over " << groups.size()
            << " click items; vocabulary size " << vocab.size() << "\n";
  return 0;
}

quert::TaskFlags parse_task_flags(const std::string& disable) {
  quert::TaskFlags flags;
  if (disable.empty() || disable == "none") return flags;
  if (disable == "geo_mp") flags.geo_mp = false;
  else if (disable == "geo_cp") flags.geo_cp = false;
  else if (disable == "ucbl") flags.ucbl = false;
  else if (disable == "ptop") flags.ptop = false;
  else throw std::invalid_argument("unknown task to disable: " + disable);
  return flags;
}

int run_train(const CommonOpts& o, const Prepared& p, const std::string& resume_path,
              const std::string& disable_task, const std::string& tag) {
  auto cfg = load_config(o);
  ensure_out_dir(o);
  cfg.model.vocab_size = static_cast<int>(p.vocab.size());
  cfg.train.tasks = parse_task_flags(disable_task);

  std::optional<quert::EncoderModel<float>> model;
  quert::TrainState state;
  const quert::TrainState* resume = nullptr;
  if (!resume_path.empty()) {
    quert::load_checkpoint<float>(resume_path, model, &state);
    resume = &state;
  } else {
    model.emplace(cfg.model, quert::RngStream(cfg.train.seed));
  }
  auto res = quert::train(*model, p.pairs, p.gaz, p.vocab, cfg.train, cfg.taskgen, o.out_dir, tag,
                          resume);
  res.log.save(o.out_dir + "/" + tag + "_log.jsonl");
  std::cout << "final checkpoint: " << res.final_checkpoint << "\n";
  if (!res.log.records.empty())
    std::cout << "final total loss: " << res.log.records.back().total << "\n";
  return 0;
}

int run_ablate(const CommonOpts& o, const Prepared& p) {
  auto cfg = load_config(o);
  ensure_out_dir(o);
  cfg.model.vocab_size = static_cast<int>(p.vocab.size());
  auto runs = quert::ablation_suite<float>(cfg.model, p.pairs, p.gaz, p.vocab, cfg.train,
                                           cfg.taskgen, o.out_dir);
  for (const auto& r : runs)
    std::cout << "disabled " << r.disabled_task << " -> " << r.checkpoint << "\n";
  return 0;
}

int run_eval(const CommonOpts& o, const Prepared& p, const std::string& ckpt_path,
             std::size_t n_probes) {
  auto cfg = load_config(o);
  ensure_out_dir(o);
  std::optional<quert::EncoderModel<float>> model;
  quert::load_checkpoint<float>(ckpt_path, model);
  std::uint64_t seed = o.seed.value_or(cfg.train.seed);
  auto task = quert::make_click_retrieval_task(p.pairs, n_probes, 20, quert::RngStream(seed));
  auto res = quert::retrieve(task, *model, p.vocab);
  res.report.checkpoint_id = ckpt_path;
  res.report.seed = seed;
  quert::save_probe_report(res.report, o.out_dir + "/eval_retrieval.json");
  for (const auto& [k, v] : res.report.metrics) std::cout << k << " = " << v << "\n";
  return 0;
}

int run_probe(const CommonOpts& o, const Prepared& p, const std::string& ckpt_path,
              const std::string& which) {
  auto cfg = load_config(o);
  ensure_out_dir(o);
  std::optional<quert::EncoderModel<float>> model;
  quert::load_checkpoint<float>(ckpt_path, model);
  std::uint64_t seed = o.seed.value_or(cfg.train.seed);

  auto emit = [&](quert::ProbeReport rep, const std::string& name) {
    rep.checkpoint_id = ckpt_path;
    rep.seed = seed;
    quert::save_probe_report(rep, o.out_dir + "/probe_" + name + ".json");
    std::cout << "[" << name << "]\n";
    for (const auto& [k, v] : rep.metrics) std::cout << "  " << k << " = " << v << "\n";
  };

  bool all = which == "all";
  if (all || which == "geo") {
    auto probes = quert::make_geo_mask_probes(p.pairs, p.gaz, p.vocab, 200,
                                              quert::RngStream(seed).derive(2));
    emit(quert::geo_mask_probe(*model, p.vocab, probes), "geo");
  }
  if (all || which == "order") {
    auto probes = quert::make_order_probes(p.pairs, 100, quert::RngStream(seed).derive(3));
    emit(quert::order_probe(*model, p.vocab, probes), "order");
  }
  if (all || which == "similarity") {
    auto sets = quert::make_similarity_sets(p.pairs, p.gaz, 100, quert::RngStream(seed).derive(4));
    emit(quert::similarity_probe(*model, p.vocab, sets), "similarity");
  }
  if (all || which == "cluster") {
    // Prefer 5 POIs per city; fall back until at least two cities qualify.
    std::map<std::string, std::vector<std::string>> by_city;
    for (std::size_t per_city = 5; per_city >= 2; --per_city) {
      by_city = quert::make_cluster_set(p.gaz, 8, per_city);
      if (by_city.size() >= 2) break;
    }
    auto res = quert::cluster_probe(*model, p.vocab, by_city);
    quert::ProbeReport rep;
    rep.task = "cluster_probe";
    rep.metrics["cluster_ratio"] = res.cluster_ratio;
    std::ofstream emb(o.out_dir + "/probe_cluster_embeddings.jsonl");
    for (std::size_t i = 0; i < res.poi_names.size(); ++i)
      emb << nlohmann::json{{"poi", res.poi_names[i]}, {"embedding", res.embeddings[i]}}.dump()
          << '\n';
    emit(rep, "cluster");
  }
  if (all || which == "retrieval") {
    auto task =
        quert::make_click_retrieval_task(p.pairs, 100, 20, quert::RngStream(seed).derive(5));
    auto res = quert::retrieve(task, *model, p.vocab);
    quert::ProbeReport rep = res.report;
    emit(rep, "retrieval");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geography-aware query pretraining laboratory"};
  app.require_subcommand(1);

  CommonOpts synth_o, prep_o, train_o, ablate_o, eval_o, probe_o;
  std::string gaz_path = "out/gazetteer.tsv";
  std::string corpus_path = "out/corpus.jsonl";
  std::string vocab_path = "out/vocab.txt";
  std::string resume_path, disable_task, tag = "model", ckpt_path, probe_which = "all";
  std::size_t top_n = 0, n_probes = 100;

  auto* synth = app.add_subcommand("synth", "generate a gazetteer and query/click corpus");
  add_common(synth, synth_o);

  auto* prep = app.add_subcommand("prep", "filter by confidence score and build the vocabulary");
  add_common(prep, prep_o);
  prep->add_option("--gazetteer", gaz_path, "gazetteer TSV");
  prep->add_option("--corpus", corpus_path, "corpus JSON-lines file");
  prep->add_option("--top", top_n, "keep only the N highest-confidence pairs (0 = all)");

  auto* train = app.add_subcommand("train", "run joint pretraining");
  add_common(train, train_o);
  train->add_option("--gazetteer", gaz_path, "gazetteer TSV");
  train->add_option("--corpus", corpus_path, "prepared corpus JSON-lines file");
  train->add_option("--vocab", vocab_path, "vocabulary file");
  train->add_option("--resume", resume_path, "checkpoint to resume from");
  train->add_option("--disable-task", disable_task, "train without one task (geo_mp|geo_cp|ucbl|ptop)");
  train->add_option("--tag", tag, "output file prefix");

  auto* ablate = app.add_subcommand("ablate", "train the four leave-one-out models");
  add_common(ablate, ablate_o);
  ablate->add_option("--gazetteer", gaz_path, "gazetteer TSV");
  ablate->add_option("--corpus", corpus_path, "prepared corpus JSON-lines file");
  ablate->add_option("--vocab", vocab_path, "vocabulary file");

  auto* eval = app.add_subcommand("eval", "zero-shot click-retrieval evaluation of a checkpoint");
  add_common(eval, eval_o);
  eval->add_option("--gazetteer", gaz_path, "gazetteer TSV");
  eval->add_option("--corpus", corpus_path, "prepared corpus JSON-lines file");
  eval->add_option("--vocab", vocab_path, "vocabulary file");
  eval->add_option("--checkpoint", ckpt_path, "checkpoint to evaluate")->required();
  eval->add_option("--probes", n_probes, "number of probe queries");

  auto* probe = app.add_subcommand("probe", "representation probes of a checkpoint");
  add_common(probe, probe_o);
  probe->add_option("--gazetteer", gaz_path, "gazetteer TSV");
  probe->add_option("--corpus", corpus_path, "prepared corpus JSON-lines file");
  probe->add_option("--vocab", vocab_path, "vocabulary file");
  probe->add_option("--checkpoint", ckpt_path, "checkpoint to probe")->required();
  probe->add_option("--probe", probe_which, "geo|order|similarity|cluster|retrieval|all");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return run_synth(synth_o);
    if (prep->parsed()) return run_prep(prep_o, gaz_path, corpus_path, top_n);
    if (train->parsed())
      return run_train(train_o, load_prepared(gaz_path, corpus_path, vocab_path), resume_path,
                       disable_task, tag);
    if (ablate->parsed())
      return run_ablate(ablate_o, load_prepared(gaz_path, corpus_path, vocab_path));
    if (eval->parsed())
      return run_eval(eval_o, load_prepared(gaz_path, corpus_path, vocab_path), ckpt_path,
                      n_probes);
    if (probe->parsed())
      return run_probe(probe_o, load_prepared(gaz_path, corpus_path, vocab_path), ckpt_path,
                       probe_which);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 1;
}
