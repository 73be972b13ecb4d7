#include "mgcd/config.hpp"

#include <fstream>
#include <sstream>

namespace mgcd {

namespace {

long parse_long(const std::string& key, const std::string& v) {
  size_t pos = 0;
  long out;
  try {
    out = std::stol(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + v + "' is not an integer");
  }
  if (pos != v.size()) throw ConfigError(key + ": '" + v + "' is not an integer");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  size_t pos = 0;
  double out;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + v + "' is not a number");
  }
  if (pos != v.size()) throw ConfigError(key + ": '" + v + "' is not a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean (0/1/true/false)");
}

void set_key(RunConfig& c, const std::string& key, const std::string& value) {
  TrainConfig& t = c.train;
  if (key == "method") t.method = method_from_name(value);
  else if (key == "dataset") c.dataset_path = value;
  else if (key == "out_dir") c.out_dir = value;
  else if (key == "checkpoint_every") c.checkpoint_every = parse_long(key, value);
  else if (key == "image_size") c.image_size = static_cast<int>(parse_long(key, value));
  else if (key == "channels") c.channels = static_cast<int>(parse_long(key, value));
  else if (key == "batch") t.batch = static_cast<int>(parse_long(key, value));
  else if (key == "iterations") t.iterations = parse_long(key, value);
  else if (key == "lr") t.lr0 = parse_double(key, value);
  else if (key == "decay_every") t.decay_every = static_cast<int>(parse_long(key, value));
  else if (key == "langevin_steps") t.langevin.steps = static_cast<int>(parse_long(key, value));
  else if (key == "langevin_step_size") t.langevin.step_size = parse_double(key, value);
  else if (key == "clamp") t.langevin.clamp = parse_bool(key, value);
  else if (key == "l_single") t.l_single = static_cast<int>(parse_long(key, value));
  else if (key == "budget_parity") t.budget_parity = parse_bool(key, value);
  else if (key == "d") t.d = static_cast<int>(parse_long(key, value));
  else if (key == "S") t.S = static_cast<int>(parse_long(key, value));
  else if (key == "channel_scale") t.channel_scale = parse_double(key, value);
  else if (key == "sigma") t.sigma = parse_double(key, value);
  else if (key == "reference") {
    if (value == "gaussian") t.uniform_ref = false;
    else if (value == "uniform") t.uniform_ref = true;
    else throw ConfigError("reference: '" + value + "' must be gaussian or uniform");
  } else if (key == "seed") t.seed = static_cast<uint64_t>(parse_long(key, value));
  else if (key == "diag_every") t.diag_every = static_cast<int>(parse_long(key, value));
  else if (key == "conditional") t.conditional = parse_bool(key, value);
  else if (key == "mask_kind") t.mask_kind = mask_kind_from_name(value);
  else if (key == "mask_size") {
    t.mask_params.square_h = static_cast<int>(parse_long(key, value));
    t.mask_params.square_w = t.mask_params.square_h;
  } else if (key == "pepper_fraction") t.mask_params.pepper_fraction = parse_double(key, value);
  else if (key == "doodle_width") t.mask_params.doodle_width = static_cast<int>(parse_long(key, value));
  else throw ConfigError("unknown configuration key '" + key + "'");
}

}  // namespace

void RunConfig::validate() const {
  train.validate();
  if (image_size < 1) throw ConfigError("image_size must be positive");
  if (channels != 1 && channels != 3) throw ConfigError("channels must be 1 or 3");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  // the image side must telescope to 1x1 in S block averages
  int side = image_size;
  for (int s = 0; s < train.S && side > 1; ++s) {
    if (side % train.d != 0)
      throw ConfigError("image_size " + std::to_string(image_size) + " is not d^S with d=" +
                        std::to_string(train.d) + ", S=" + std::to_string(train.S));
    side /= train.d;
  }
  if (side != 1)
    throw ConfigError("image_size " + std::to_string(image_size) + " does not reduce to 1x1 in " +
                      std::to_string(train.S) + " steps of d=" + std::to_string(train.d));
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig config;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const size_t e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value, got '" + line +
                        "'");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    const size_t ke = key.find_last_not_of(" \t");
    key = key.substr(0, ke == std::string::npos ? 0 : ke + 1);
    const size_t vb = value.find_first_not_of(" \t");
    value = vb == std::string::npos ? "" : value.substr(vb);
    set_key(config, key, value);
  }
  return config;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + assignment + "' must be key=value");
  set_key(config, assignment.substr(0, eq), assignment.substr(eq + 1));
}

std::string serialize_config(const RunConfig& c) {
  std::ostringstream os;
  os.precision(17);
  const TrainConfig& t = c.train;
  os << "method=" << method_name(t.method) << "\n";
  os << "dataset=" << c.dataset_path << "\n";
  os << "out_dir=" << c.out_dir << "\n";
  os << "checkpoint_every=" << c.checkpoint_every << "\n";
  os << "image_size=" << c.image_size << "\n";
  os << "channels=" << c.channels << "\n";
  os << "batch=" << t.batch << "\n";
  os << "iterations=" << t.iterations << "\n";
  os << "lr=" << t.lr0 << "\n";
  os << "decay_every=" << t.decay_every << "\n";
  os << "langevin_steps=" << t.langevin.steps << "\n";
  os << "langevin_step_size=" << t.langevin.step_size << "\n";
  os << "clamp=" << (t.langevin.clamp ? 1 : 0) << "\n";
  os << "l_single=" << t.l_single << "\n";
  os << "budget_parity=" << (t.budget_parity ? 1 : 0) << "\n";
  os << "d=" << t.d << "\n";
  os << "S=" << t.S << "\n";
  os << "channel_scale=" << t.channel_scale << "\n";
  os << "sigma=" << t.sigma << "\n";
  os << "reference=" << (t.uniform_ref ? "uniform" : "gaussian") << "\n";
  os << "seed=" << t.seed << "\n";
  os << "diag_every=" << t.diag_every << "\n";
  os << "conditional=" << (t.conditional ? 1 : 0) << "\n";
  os << "mask_kind=" << mask_kind_name(t.mask_kind) << "\n";
  os << "mask_size=" << t.mask_params.square_h << "\n";
  os << "pepper_fraction=" << t.mask_params.pepper_fraction << "\n";
  os << "doodle_width=" << t.mask_params.doodle_width << "\n";
  return os.str();
}

}  // namespace mgcd
