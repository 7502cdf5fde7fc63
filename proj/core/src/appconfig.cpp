#include "odetex/appconfig.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace odetex::io {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": " + v);
}

std::vector<int> to_int_list(const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(trim(item)));
  return out;
}

}  // namespace

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap cfg;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config: bad section header at line " +
                                    std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key = value at line " +
                                  std::to_string(lineno));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config: empty key at line " +
                                  std::to_string(lineno));
    cfg[section][key] = value;
  }
  return cfg;
}

ConfigMap parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

void apply_train_config(const ConfigMap& cfg, train::TrainConfig& out) {
  auto it = cfg.find("train");
  if (it == cfg.end()) return;
  for (const auto& [key, v] : it->second) {
    if (key == "iterations") out.iterations = std::stoi(v);
    else if (key == "refresh_rate") out.refresh_rate = std::stoi(v);
    else if (key == "lr") out.lr = std::stod(v);
    else if (key == "t_warm") out.t_warm = std::stod(v);
    else if (key == "t_first") out.t_first = std::stod(v);
    else if (key == "t_last") out.t_last = std::stod(v);
    else if (key == "tol") out.tol = std::stod(v);
    else if (key == "init_phase_iterations") out.init_phase_iterations = std::stoi(v);
    else if (key == "plateau_patience") out.plateau_patience = std::stoi(v);
    else if (key == "plateau_window") out.plateau_window = std::stoi(v);
    else if (key == "plateau_threshold") out.plateau_threshold = std::stod(v);
    else if (key == "n_slices") out.n_slices = std::stoi(v);
    else if (key == "n_crops") out.n_crops = std::stoi(v);
    else if (key == "n_shuffles") out.n_shuffles = std::stoi(v);
    else if (key == "crop_size") out.crop_size = std::stoi(v);
    else if (key == "lambda_range") out.lambda_range = std::stof(v);
    else if (key == "h_max") out.h_max = std::stof(v);
    else if (key == "isotropic_ggx") out.isotropic_ggx = to_bool(v, key);
    else if (key == "seed") out.seed = std::stoull(v);
    else throw std::invalid_argument("config: unknown [train] key " + key);
  }
}

void apply_field_config(const ConfigMap& cfg, field::FieldConfig& out) {
  auto it = cfg.find("field");
  if (it == cfg.end()) return;
  for (const auto& [key, v] : it->second) {
    if (key == "levels") out.levels = std::stoi(v);
    else if (key == "channels") out.channels = to_int_list(v);
    else if (key == "use_attention") out.use_attention = to_bool(v, key);
    else if (key == "attn_heads") out.attn_heads = std::stoi(v);
    else if (key == "attn_head_dim") out.attn_head_dim = std::stoi(v);
    else if (key == "time_embed_dim") out.time_embed_dim = std::stoi(v);
    else if (key == "norm_groups") out.norm_groups = std::stoi(v);
    else throw std::invalid_argument("config: unknown [field] key " + key);
  }
}

}  // namespace odetex::io
