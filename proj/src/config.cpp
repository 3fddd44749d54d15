#include "admix/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace admix {

Method method_from_name(const std::string& name) {
  if (name == "baseline") return Method::baseline;
  if (name == "admix") return Method::admix;
  if (name == "swap") return Method::swap;
  if (name == "worddrop") return Method::worddrop;
  if (name == "switchout") return Method::switchout;
  if (name == "seqmix") return Method::seqmix;
  if (name == "gaussian") return Method::gaussian;
  throw std::invalid_argument(
      "unknown method '" + name +
      "' (expected baseline|admix|swap|worddrop|switchout|seqmix|gaussian)");
}

const char* method_name(Method m) {
  switch (m) {
    case Method::baseline: return "baseline";
    case Method::admix: return "admix";
    case Method::swap: return "swap";
    case Method::worddrop: return "worddrop";
    case Method::switchout: return "switchout";
    case Method::seqmix: return "seqmix";
    case Method::gaussian: return "gaussian";
  }
  return "?";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int64_t to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int64_t r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

uint64_t to_uint(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' expects an unsigned integer, got '" +
                                v + "'");
  }
}

double to_real(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: key '" + key + "' expects true|false, got '" + v + "'");
}

std::vector<std::string> split_csv(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(v);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value) {
  // model
  if (key == "model.d_model") cfg.model.d_model = to_int(key, value);
  else if (key == "model.d_ff") cfg.model.d_ff = to_int(key, value);
  else if (key == "model.n_layers") cfg.model.n_layers = to_int(key, value);
  else if (key == "model.n_heads") cfg.model.n_heads = to_int(key, value);
  else if (key == "model.dropout") cfg.model.dropout = to_real(key, value);
  else if (key == "model.max_len") cfg.model.max_len = to_int(key, value);
  else if (key == "model.shared_embeddings") cfg.model.shared_embeddings = to_bool(key, value);
  else if (key == "model.tie_output") cfg.model.tie_output = to_bool(key, value);
  // admix
  else if (key == "admix.alpha") cfg.admix.alpha = to_real(key, value);
  else if (key == "admix.beta") cfg.admix.beta = to_real(key, value);
  else if (key == "admix.gamma") cfg.admix.gamma = to_real(key, value);
  else if (key == "admix.lambda") cfg.admix.lambda = to_real(key, value);
  else if (key == "admix.ops") {
    cfg.admix.ops.clear();
    for (const auto& name : split_csv(value)) cfg.admix.ops.push_back(noise_op_from_name(name));
  } else if (key == "admix.sides") cfg.admix.sides = sides_from_name(value);
  else if (key == "admix.residual") cfg.admix.residual = to_bool(key, value);
  else if (key == "admix.per_sentence") cfg.admix.per_sentence = to_bool(key, value);
  else if (key == "admix.stop_grad_clean") cfg.admix.stop_grad_clean = to_bool(key, value);
  else if (key == "admix.divergence") cfg.admix.divergence = divergence_from_name(value);
  // optimizer
  else if (key == "optimizer.lr_base") cfg.optimizer.lr_base = to_real(key, value);
  else if (key == "optimizer.warmup_steps") cfg.optimizer.warmup_steps = to_int(key, value);
  else if (key == "optimizer.beta1") cfg.optimizer.beta1 = to_real(key, value);
  else if (key == "optimizer.beta2") cfg.optimizer.beta2 = to_real(key, value);
  else if (key == "optimizer.eps") cfg.optimizer.eps = to_real(key, value);
  // top level
  else if (key == "max_steps") cfg.max_steps = to_int(key, value);
  else if (key == "batch_tokens") cfg.batch_tokens = to_int(key, value);
  else if (key == "seed") cfg.seed = to_uint(key, value);
  else if (key == "val_interval") cfg.val_interval = to_int(key, value);
  else if (key == "patience") cfg.patience = to_int(key, value);
  else if (key == "method") cfg.method = method_from_name(value);
  else if (key == "baseline_gamma") cfg.baseline_gamma = to_real(key, value);
  else if (key == "switchout_tau") cfg.switchout_tau = to_real(key, value);
  else if (key == "gaussian_sigma") cfg.gaussian_sigma = to_real(key, value);
  else if (key == "clip_norm") cfg.clip_norm = to_real(key, value);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

TrainConfig parse_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  TrainConfig cfg;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: " + path + ":" + std::to_string(lineno) +
                                  ": expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    try {
      apply_config_entry(cfg, key, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

void TrainConfig::validate() const {
  admix.validate();
  if (max_steps <= 0) throw std::invalid_argument("config: max_steps must be positive");
  if (batch_tokens < 2) throw std::invalid_argument("config: batch_tokens must be >= 2");
  if (val_interval <= 0) throw std::invalid_argument("config: val_interval must be positive");
  if (patience < 0) throw std::invalid_argument("config: patience must be >= 0");
  if (!(baseline_gamma >= 0.0 && baseline_gamma < 1.0))
    throw std::invalid_argument("config: baseline_gamma must be in [0, 1)");
  if (!(switchout_tau > 0.0)) throw std::invalid_argument("config: switchout_tau must be positive");
  if (!(gaussian_sigma > 0.0)) throw std::invalid_argument("config: gaussian_sigma must be positive");
  if (clip_norm < 0.0) throw std::invalid_argument("config: clip_norm must be >= 0");
  if (!(optimizer.lr_base > 0.0)) throw std::invalid_argument("config: optimizer.lr_base must be positive");
  if (optimizer.warmup_steps < 0)
    throw std::invalid_argument("config: optimizer.warmup_steps must be >= 0");
}

std::string config_to_string(const TrainConfig& cfg) {
  std::ostringstream os;
  os << "model.d_model = " << cfg.model.d_model << '\n'
     << "model.d_ff = " << cfg.model.d_ff << '\n'
     << "model.n_layers = " << cfg.model.n_layers << '\n'
     << "model.n_heads = " << cfg.model.n_heads << '\n'
     << "model.dropout = " << cfg.model.dropout << '\n'
     << "model.max_len = " << cfg.model.max_len << '\n'
     << "model.shared_embeddings = " << (cfg.model.shared_embeddings ? "true" : "false") << '\n'
     << "model.tie_output = " << (cfg.model.tie_output ? "true" : "false") << '\n'
     << "admix.alpha = " << cfg.admix.alpha << '\n'
     << "admix.beta = " << cfg.admix.beta << '\n'
     << "admix.gamma = " << cfg.admix.gamma << '\n'
     << "admix.lambda = " << cfg.admix.lambda << '\n';
  os << "admix.ops = ";
  for (size_t i = 0; i < cfg.admix.ops.size(); ++i)
    os << (i ? "," : "") << noise_op_name(cfg.admix.ops[i]);
  os << '\n'
     << "admix.sides = " << sides_name(cfg.admix.sides) << '\n'
     << "admix.residual = " << (cfg.admix.residual ? "true" : "false") << '\n'
     << "admix.per_sentence = " << (cfg.admix.per_sentence ? "true" : "false") << '\n'
     << "admix.stop_grad_clean = " << (cfg.admix.stop_grad_clean ? "true" : "false") << '\n'
     << "admix.divergence = " << divergence_name(cfg.admix.divergence) << '\n'
     << "optimizer.lr_base = " << cfg.optimizer.lr_base << '\n'
     << "optimizer.warmup_steps = " << cfg.optimizer.warmup_steps << '\n'
     << "optimizer.beta1 = " << cfg.optimizer.beta1 << '\n'
     << "optimizer.beta2 = " << cfg.optimizer.beta2 << '\n'
     << "optimizer.eps = " << cfg.optimizer.eps << '\n'
     << "max_steps = " << cfg.max_steps << '\n'
     << "batch_tokens = " << cfg.batch_tokens << '\n'
     << "seed = " << cfg.seed << '\n'
     << "val_interval = " << cfg.val_interval << '\n'
     << "patience = " << cfg.patience << '\n'
     << "method = " << method_name(cfg.method) << '\n'
     << "baseline_gamma = " << cfg.baseline_gamma << '\n'
     << "switchout_tau = " << cfg.switchout_tau << '\n'
     << "gaussian_sigma = " << cfg.gaussian_sigma << '\n'
     << "clip_norm = " << cfg.clip_norm << '\n';
  return os.str();
}

}  // namespace admix
