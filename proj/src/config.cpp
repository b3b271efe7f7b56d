#include "wsod/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "wsod/common.hpp"

namespace wsod {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) {
    if (!part.empty()) parts.push_back(part);
  }
  return parts;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: " + key + ": expected a number, got '" + v + "'");
  }
}

long parse_long(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long l = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return l;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: " + key + ": expected an integer, got '" + v + "'");
  }
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  const long l = parse_long(key, v);
  if (l < 0) throw std::invalid_argument("config: " + key + " must be nonnegative");
  return static_cast<std::size_t>(l);
}

std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const std::string& p : split(v, ',')) out.push_back(parse_double(key, p));
  if (out.empty()) throw std::invalid_argument("config: " + key + ": empty list");
  return out;
}

}  // namespace

OptimizerConfig RunConfig::optimizer() const {
  OptimizerConfig cfg;
  cfg.learning_rate = train_lr;
  cfg.schedule = train_schedule;
  cfg.batch_norm_enabled_from_step = train_batchnorm_step;
  cfg.validate();
  return cfg;
}

void RunConfig::apply(const std::string& key, const std::string& value) {
  if (key == "data.scene_size") data_scene_size = parse_size(key, value);
  else if (key == "data.scenes") data_scenes = parse_size(key, value);
  else if (key == "data.count_min") data_count_min = parse_size(key, value);
  else if (key == "data.count_max") data_count_max = parse_size(key, value);
  else if (key == "data.radius_min") data_radius_min = parse_double(key, value);
  else if (key == "data.radius_max") data_radius_max = parse_double(key, value);
  else if (key == "data.noise") data_noise = parse_double(key, value);
  else if (key == "data.class") data_class = value;
  else if (key == "data.seed") data_seed = static_cast<std::uint64_t>(parse_long(key, value));
  else if (key == "model.scan_style") model_scan_style = scan_style_from_string(value);
  else if (key == "model.depth") model_depth = parse_size(key, value);
  else if (key == "model.hidden") model_hidden = parse_size(key, value);
  else if (key == "model.strides") {
    model_strides.clear();
    for (double d : parse_double_list(key, value)) model_strides.push_back(static_cast<int>(d));
  } else if (key == "model.scales") model_scales = parse_double_list(key, value);
  else if (key == "model.ratios") model_ratios = parse_double_list(key, value);
  else if (key == "model.stages") model_stages = parse_size(key, value);
  else if (key == "model.roi") model_roi = parse_size(key, value);
  else if (key == "model.merge_radius") model_merge_radius = parse_double(key, value);
  else if (key == "model.critical_point") {
    if (value == "median") model_critical_point = CriticalPointRule::RunMedian;
    else if (value == "peak") model_critical_point = CriticalPointRule::RunPeak;
    else throw std::invalid_argument("config: model.critical_point must be median|peak");
  } else if (key == "model.r_threshold") model_r_threshold = parse_double(key, value);
  else if (key == "model.couple_iou") model_couple_iou = parse_double(key, value);
  else if (key == "model.refine_iou") model_refine_iou = parse_double(key, value);
  else if (key == "train.lr") train_lr = parse_double(key, value);
  else if (key == "train.schedule") {
    train_schedule.clear();
    for (const std::string& entry : split(value, ';')) {
      const auto kv = split(entry, ':');
      if (kv.size() != 2) {
        throw std::invalid_argument("config: train.schedule entries are step:lr, got '" + entry + "'");
      }
      train_schedule.emplace_back(parse_long(key, kv[0]), parse_double(key, kv[1]));
    }
  } else if (key == "train.batchnorm_step") {
    train_batchnorm_step = value == "never" ? OptimizerConfig::kNever : parse_long(key, value);
  } else if (key == "train.epochs") train_epochs = parse_size(key, value);
  else if (key == "train.seed") train_seed = static_cast<std::uint64_t>(parse_long(key, value));
  else if (key == "eval.iou") eval_iou = parse_double(key, value);
  else if (key == "eval.nms") eval_nms = parse_double(key, value);
  else if (key == "eval.score_min") eval_score_min = parse_double(key, value);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

void RunConfig::apply_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("config: cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    line.erase(0, line.find_first_not_of(" \t"));
    line.erase(line.find_last_not_of(" \t") + 1);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                  " is not key=value: '" + line + "'");
    }
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    apply(key, value);
  }
}

RunConfig RunConfig::from_file(const std::string& path) {
  RunConfig cfg;
  cfg.apply_file(path);
  return cfg;
}

std::string RunConfig::resolved() const {
  std::ostringstream os;
  os.precision(15);
  auto list = [&](const std::vector<double>& v) {
    std::ostringstream s;
    s.precision(15);
    for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
    return s.str();
  };
  os << "data.class=" << data_class << "\n";
  os << "data.count_max=" << data_count_max << "\n";
  os << "data.count_min=" << data_count_min << "\n";
  os << "data.noise=" << data_noise << "\n";
  os << "data.radius_max=" << data_radius_max << "\n";
  os << "data.radius_min=" << data_radius_min << "\n";
  os << "data.scene_size=" << data_scene_size << "\n";
  os << "data.scenes=" << data_scenes << "\n";
  os << "data.seed=" << data_seed << "\n";
  os << "eval.iou=" << eval_iou << "\n";
  os << "eval.nms=" << eval_nms << "\n";
  os << "eval.score_min=" << eval_score_min << "\n";
  os << "model.couple_iou=" << model_couple_iou << "\n";
  os << "model.critical_point="
     << (model_critical_point == CriticalPointRule::RunMedian ? "median" : "peak") << "\n";
  os << "model.depth=" << model_depth << "\n";
  os << "model.hidden=" << model_hidden << "\n";
  os << "model.merge_radius=" << model_merge_radius << "\n";
  os << "model.r_threshold=" << model_r_threshold << "\n";
  os << "model.ratios=" << list(model_ratios) << "\n";
  os << "model.refine_iou=" << model_refine_iou << "\n";
  os << "model.roi=" << model_roi << "\n";
  os << "model.scales=" << list(model_scales) << "\n";
  os << "model.scan_style="
     << (model_scan_style == ScanStyle::Serpentine ? "serpentine" : "raster") << "\n";
  os << "model.stages=" << model_stages << "\n";
  {
    std::ostringstream s;
    for (std::size_t i = 0; i < model_strides.size(); ++i) s << (i ? "," : "") << model_strides[i];
    os << "model.strides=" << s.str() << "\n";
  }
  os << "train.batchnorm_step="
     << (train_batchnorm_step == OptimizerConfig::kNever ? std::string("never")
                                                         : std::to_string(train_batchnorm_step))
     << "\n";
  os << "train.epochs=" << train_epochs << "\n";
  os << "train.lr=" << train_lr << "\n";
  {
    std::ostringstream s;
    s.precision(15);
    for (std::size_t i = 0; i < train_schedule.size(); ++i) {
      s << (i ? ";" : "") << train_schedule[i].first << ":" << train_schedule[i].second;
    }
    os << "train.schedule=" << s.str() << "\n";
  }
  os << "train.seed=" << train_seed << "\n";
  return os.str();
}

}  // namespace wsod
