#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "admix/bleu.hpp"
#include "admix/checkpoint.hpp"
#include "admix/config.hpp"
#include "admix/corpus.hpp"
#include "admix/evaluation.hpp"
#include "admix/mixing.hpp"
#include "admix/noise.hpp"
#include "admix/trainer.hpp"
#include "admix/vocab.hpp"

#ifdef ADMIX_WITH_OPENBLAS
extern "C" void openblas_set_num_threads(int);
#endif

namespace {

using namespace admix;

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::string item;
  std::istringstream is(csv);
  while (std::getline(is, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

std::string ckpt_label(const std::string& path) {
  auto stem = std::filesystem::path(path).stem().string();
  if (stem == "best" || stem == "final") {
    const auto parent = std::filesystem::path(path).parent_path().filename().string();
    if (!parent.empty()) return parent + "/" + stem;
  }
  return stem;
}

TrainConfig load_config(const std::string& config_path, const std::string& method_override,
                        uint64_t seed, bool seed_set) {
  TrainConfig cfg = parse_train_config(config_path);
  if (!method_override.empty()) cfg.method = method_from_name(method_override);
  if (seed_set) cfg.seed = seed;
  return cfg;
}

int cmd_prepare_vocab(const std::string& train_prefix, const std::string& out_path,
                      int64_t min_freq, int64_t max_size) {
  const auto vocab =
      Vocab::build({train_prefix + ".src", train_prefix + ".tgt"}, min_freq, max_size);
  vocab.save(out_path);
  std::cout << "vocab size=" << vocab.size() << " written to " << out_path << "\n";
  return 0;
}

int cmd_train(const TrainConfig& cfg, const TrainPaths& paths) {
  const auto res = train(cfg, paths);
  if (res.nan_abort) {
    std::cerr << "training aborted on non-finite loss\n";
    return 1;
  }
  std::printf("trained steps=%lld best_val_bleu=%.2f best_step=%lld\n",
              static_cast<long long>(res.steps), res.best_val_bleu,
              static_cast<long long>(res.best_step));
  std::printf("log=%s best=%s final=%s\n", res.log_path.c_str(), res.best_ckpt.c_str(),
              res.final_ckpt.c_str());
  return 0;
}

int cmd_translate(const std::string& ckpt_path, const std::string& vocab_path,
                  const std::string& input, const std::string& output, int64_t max_len) {
  const auto vocab = Vocab::load(vocab_path);
  auto ck = load_checkpoint(ckpt_path);
  if (ck.vocab_hash != vocab.hash())
    throw std::runtime_error("translate: vocabulary " + vocab_path +
                             " does not match the checkpoint's vocabulary");
  std::vector<std::vector<int32_t>> srcs;
  for (const auto& line : read_lines(input)) srcs.push_back(vocab.encode(line));
  if (max_len <= 0) max_len = ck.model->config().max_len;
  const auto hyps = ck.model->greedy_decode(srcs, max_len);
  std::ofstream out(output);
  if (!out) throw std::runtime_error("translate: cannot write " + output);
  for (const auto& h : hyps) out << vocab.decode(h) << '\n';
  std::cout << "translated " << hyps.size() << " sentences to " << output << "\n";
  return 0;
}

int cmd_evaluate(const std::string& hyp_path, const std::string& ref_path, bool smooth,
                 bool lowercase) {
  const auto rep = corpus_bleu_lines(read_lines(hyp_path), read_lines(ref_path), smooth, lowercase);
  std::cout << rep.to_string() << "\n";
  return 0;
}

int cmd_augment(const TrainConfig& cfg, const std::string& vocab_path,
                const std::string& train_prefix, int64_t sentences) {
  const auto vocab = Vocab::load(vocab_path);
  auto pairs = load_parallel_corpus(train_prefix, vocab);
  if (sentences > 0 && static_cast<int64_t>(pairs.size()) > sentences)
    pairs.resize(static_cast<size_t>(sentences));
  cfg.admix.validate();

  Rng master(cfg.seed);
  Rng noise_rng = master.stream("noise");
  Rng mix_rng = master.stream("mixing");

  const size_t k = cfg.admix.k();
  const size_t draws = cfg.admix.per_sentence ? pairs.size() : 1;
  std::vector<std::vector<double>> w;
  std::vector<double> m;
  for (size_t i = 0; i < draws; ++i) {
    w.push_back(mix_rng.dirichlet(k, cfg.admix.alpha));
    m.push_back(cfg.admix.residual ? mix_rng.beta(cfg.admix.beta) : 1.0);
  }

  auto print_draw = [&](size_t i) {
    std::printf("%s=%zu k=%zu m=%.6f w=", cfg.admix.per_sentence ? "sent" : "batch", i, k, m[i]);
    for (size_t j = 0; j < k; ++j) std::printf("%s%.6f", j ? "," : "", w[i][j]);
    std::printf("\n");
  };
  if (!cfg.admix.per_sentence) print_draw(0);

  for (size_t s = 0; s < pairs.size(); ++s) {
    if (cfg.admix.per_sentence) print_draw(s);
    const bool do_src = cfg.admix.sides != Sides::target_only;
    const bool do_tgt = cfg.admix.sides != Sides::source_only;
    std::printf("sent=%zu side=src op=orig tokens= %s\n", s, vocab.decode(pairs[s].src).c_str());
    if (do_src)
      for (const auto op : cfg.admix.ops) {
        const auto noised =
            apply_noise(op, pairs[s].src, cfg.admix.gamma, noise_rng, vocab, DropMode::blank);
        std::printf("sent=%zu side=src op=%s tokens= %s\n", s, noise_op_name(op),
                    vocab.decode(noised).c_str());
      }
    std::printf("sent=%zu side=tgt op=orig tokens= %s\n", s, vocab.decode(pairs[s].tgt).c_str());
    if (do_tgt)
      for (const auto op : cfg.admix.ops) {
        const auto noised =
            apply_noise(op, pairs[s].tgt, cfg.admix.gamma, noise_rng, vocab, DropMode::blank);
        std::printf("sent=%zu side=tgt op=%s tokens= %s\n", s, noise_op_name(op),
                    vocab.decode(noised).c_str());
      }
  }
  return 0;
}

int cmd_robustness(const std::vector<std::string>& ckpt_paths, const std::string& valid_prefix,
                   const std::string& vocab_path, const std::vector<int>& ops, uint64_t seed) {
  const auto vocab = Vocab::load(vocab_path);
  const auto pairs = load_parallel_corpus(valid_prefix, vocab);

  std::vector<LoadedCheckpoint> loaded;
  std::vector<std::pair<std::string, Transformer*>> models;
  for (const auto& path : ckpt_paths) {
    loaded.push_back(load_checkpoint(path));
    if (loaded.back().vocab_hash != vocab.hash())
      throw std::runtime_error("robustness: vocabulary does not match checkpoint " + path);
    models.emplace_back(ckpt_label(path), loaded.back().model.get());
  }

  // Substitutions come from the first (by convention: baseline) checkpoint's
  // source embedding table so every model faces the same noisy inputs.
  const auto& table = models.front().second->src_table().data();
  const auto cells = robustness_sweep(models, pairs, table, vocab.size(),
                                      models.front().second->config().d_model, ops, vocab, seed);
  std::cout << robustness_table(cells);
  for (const auto& c : cells)
    std::printf("model=%s ops=%d bleu=%.2f\n", c.model.c_str(), c.num_ops, c.bleu);
  return 0;
}

int cmd_sweep(const TrainConfig& cfg, const TrainPaths& paths, const std::string& axis,
              const std::vector<double>& values) {
  const auto rows = sweep(cfg, paths, axis, values);
  std::printf("%-12s val_bleu\n", axis.c_str());
  for (const auto& r : rows) std::printf("%-12g %8.2f\n", r.value, r.val_bleu);
  for (const auto& r : rows)
    std::printf("axis=%s value=%g val_bleu=%.2f\n", axis.c_str(), r.value, r.val_bleu);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef ADMIX_WITH_OPENBLAS
  openblas_set_num_threads(1);
#endif
  CLI::App app{"AdMix neural machine translation toolkit"};
  app.require_subcommand(1);

  std::string config_path, train_prefix, valid_prefix, vocab_path, out_dir, method;
  std::string ckpt, input, output, hyp, ref, axis = "lambda", ops_csv = "0,1,2,3", values_csv;
  std::vector<std::string> ckpts;
  uint64_t seed = 0;
  bool smooth = false, lowercase = false;
  int64_t min_freq = 1, max_size = 0, sentences = 1, max_len = 0;

  auto* prep = app.add_subcommand("prepare-vocab", "Build a vocabulary from a parallel corpus");
  prep->add_option("--train", train_prefix, "corpus prefix (<prefix>.src/.tgt)")->required();
  prep->add_option("--out", out_dir, "vocabulary output path")->required();
  prep->add_option("--min-freq", min_freq, "minimum token frequency");
  prep->add_option("--max-size", max_size, "maximum vocabulary size incl. specials (0 = all)");

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", config_path, "config file")->required();
  tr->add_option("--train", train_prefix, "training corpus prefix")->required();
  tr->add_option("--valid", valid_prefix, "validation corpus prefix")->required();
  tr->add_option("--vocab", vocab_path, "vocabulary file")->required();
  tr->add_option("--out", out_dir, "output directory")->required();
  auto* tr_seed = tr->add_option("--seed", seed, "seed override");
  tr->add_option("--method", method, "method override");

  auto* tl = app.add_subcommand("translate", "Greedy-decode a source file");
  tl->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  tl->add_option("--vocab", vocab_path, "vocabulary file")->required();
  tl->add_option("--input", input, "source text file")->required();
  tl->add_option("--output", output, "hypothesis output file")->required();
  tl->add_option("--max-len", max_len, "decode length cap (0 = model max_len)");

  auto* ev = app.add_subcommand("evaluate", "Corpus BLEU of a hypothesis file");
  ev->add_option("--hyp", hyp, "hypothesis file")->required();
  ev->add_option("--ref", ref, "reference file")->required();
  ev->add_flag("--smooth", smooth, "add-one smoothing for zero n-gram counts");
  ev->add_flag("--lowercase", lowercase, "case-insensitive scoring");

  auto* au = app.add_subcommand("augment", "Dump noised variants and mixing draws");
  au->add_option("--config", config_path, "config file")->required();
  au->add_option("--vocab", vocab_path, "vocabulary file")->required();
  au->add_option("--train", train_prefix, "corpus prefix")->required();
  au->add_option("--sentences", sentences, "number of sentences to dump");
  auto* au_seed = au->add_option("--seed", seed, "seed override");

  auto* rb = app.add_subcommand("robustness", "BLEU matrix over noisy validation sets");
  rb->add_option("--checkpoint", ckpts, "model checkpoint (repeatable; first supplies the table)")
      ->required();
  rb->add_option("--valid", valid_prefix, "validation corpus prefix")->required();
  rb->add_option("--vocab", vocab_path, "vocabulary file")->required();
  rb->add_option("--ops", ops_csv, "comma-separated op counts");
  rb->add_option("--seed", seed, "noisy-set seed");

  auto* sw = app.add_subcommand("sweep", "Train one model per hyperparameter value");
  sw->add_option("--config", config_path, "config file")->required();
  sw->add_option("--axis", axis, "lambda or gamma");
  sw->add_option("--values", values_csv, "comma-separated values")->required();
  sw->add_option("--train", train_prefix, "training corpus prefix")->required();
  sw->add_option("--valid", valid_prefix, "validation corpus prefix")->required();
  sw->add_option("--vocab", vocab_path, "vocabulary file")->required();
  sw->add_option("--out", out_dir, "output directory")->required();
  auto* sw_seed = sw->add_option("--seed", seed, "seed override");
  sw->add_option("--method", method, "method override");

  CLI11_PARSE(app, argc, argv);

  try {
    if (prep->parsed()) return cmd_prepare_vocab(train_prefix, out_dir, min_freq, max_size);
    if (tr->parsed()) {
      const auto cfg = load_config(config_path, method, seed, !tr_seed->empty());
      return cmd_train(cfg, {train_prefix, valid_prefix, vocab_path, out_dir});
    }
    if (tl->parsed()) return cmd_translate(ckpt, vocab_path, input, output, max_len);
    if (ev->parsed()) return cmd_evaluate(hyp, ref, smooth, lowercase);
    if (au->parsed()) {
      const auto cfg = load_config(config_path, "", seed, !au_seed->empty());
      return cmd_augment(cfg, vocab_path, train_prefix, sentences);
    }
    if (rb->parsed()) {
      std::vector<int> ops;
      for (const auto v : parse_values(ops_csv)) ops.push_back(static_cast<int>(v));
      return cmd_robustness(ckpts, valid_prefix, vocab_path, ops, seed);
    }
    if (sw->parsed()) {
      const auto cfg = load_config(config_path, method, seed, !sw_seed->empty());
      return cmd_sweep(cfg, {train_prefix, valid_prefix, vocab_path, out_dir}, axis,
                       parse_values(values_csv));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
