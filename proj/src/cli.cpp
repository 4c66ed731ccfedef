#include "xprospect/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <tuple>

#include "CLI11.hpp"
#include "xprospect/binio.hpp"
#include "xprospect/dataset.hpp"
#include "xprospect/io.hpp"
#include "xprospect/projection.hpp"
#include "xprospect/seed.hpp"

namespace xprospect::cli {

namespace fs = std::filesystem;
using binio::read_file;
using binio::write_file;

namespace {

struct OptionSpec {
  const char* key;
  const char* help;
  bool is_flag = false;
};

struct CommandSpec {
  const char* name;
  const char* help;
  std::vector<OptionSpec> options;
};

const std::vector<OptionSpec> kCommon = {
    {"seed", "root seed for every random choice"},
    {"config", "key=value config file; flags override it"},
    {"manifest", "dataset manifest (TSV)"},
    {"out", "output path"},
};

const std::vector<OptionSpec> kModel = {
    {"input_size", "input image side S (power of two >= 8)"},
    {"dense_units", "Connection-A dense units N (cube of a power of two)"},
    {"base_channels", "first encoder stage width"},
    {"use_backprojection", "inject the fused back projection into the fusion decoder", true},
};

const std::vector<OptionSpec> kEma = {
    {"use_ema", "keep an exponential moving average of the weights", true},
    {"ema_decay", "EMA decay d"},
    {"ema_reset_interval", "copy the EMA into the weights every K steps"},
};

std::vector<OptionSpec> join(std::initializer_list<std::vector<OptionSpec>> parts) {
  std::vector<OptionSpec> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

const std::vector<CommandSpec>& commands() {
  static const std::vector<CommandSpec> specs = {
      {"phantom", "write synthetic phantom volumes into --out",
       {{"size", "volume side"},
        {"count", "number of phantoms"},
        {"domain", "hu or unit"},
        {"constant", "write constant volumes with this value instead"},
        {"prefix", "file name prefix"}}},
      {"ingest", "normalize and resize a directory of HU volumes; write the manifest to --out",
       {{"input", "directory of .xvol volumes"},
        {"size", "target side"},
        {"ratio", "train fraction of the non-test rows"},
        {"test_count", "rows held out as the test tranche"}}},
      {"project", "write frontal and lateral mean projections for every manifest row", {}},
      {"backproject", "fuse back projections of a frontal/lateral pair into --out",
       {{"frontal", "frontal .ximg"}, {"lateral", "lateral .ximg"}}},
      {"train", "train the reconstruction model on the train rows; outputs go to the --out directory",
       join({kModel, kEma,
             {{"loss", "MSE or MAE"},
              {"optimizer", "Adam or Nadam"},
              {"learning_rate", "step size"},
              {"beta1", "first-moment decay"},
              {"beta2", "second-moment decay"},
              {"epsilon", "denominator guard"},
              {"epochs", "passes over the train rows"},
              {"batch_size", "samples per optimizer step"},
              {"checkpoint_every", "also checkpoint every N steps"},
              {"model_name", "name recorded in model.cfg"},
              {"prior_head_bias", "start the output bias at the logit of the mean label", true},
              {"wall_clock", "record elapsed milliseconds in the log", true}}})},
      {"predict", "reconstruct one volume from a frontal/lateral pair into --out",
       join({kModel,
             {{"checkpoint", "model checkpoint"},
              {"frontal", "frontal .ximg"},
              {"lateral", "lateral .ximg"},
              {"ema_weights", "use the checkpoint's EMA weights", true}}})},
      {"eval", "append the test-split MSE of a checkpoint to the report at --out",
       join({kModel,
             {{"checkpoint", "model checkpoint"},
              {"ema_weights", "use the checkpoint's EMA weights", true},
              {"model_name", "report name"},
              {"loss", "training loss to report"},
              {"optimizer", "optimizer to report"}}})},
      {"gradcheck", "compare analytic gradients with central differences",
       join({kModel,
             {{"tolerance", "max relative error"},
              {"samples", "coordinates per tensor"},
              {"loss", "MSE or MAE"}}})},
      {"style-train", "train the cycle-consistent style model; outputs go to the --out directory",
       join({kEma,
             {{"x_dir", "domain X images (mean projections)"},
              {"y_dir", "domain Y images (X-rays)"},
              {"view", "view to stylize when --manifest is given"},
              {"lambda_cyc", "cycle-consistency weight"},
              {"gen_channels", "generator width"},
              {"disc_channels", "discriminator width"},
              {"steps", "training steps"},
              {"learning_rate", "Nadam step size"}}})},
      {"export-slice", "write one axis-aligned slice to --out (.ximg or .pgm)",
       {{"volume", "input .xvol"}, {"axis", "axial, coronal or sagittal"}, {"index", "slice index"}}},
  };
  return specs;
}

std::string dashed(std::string key) {
  std::ranges::replace(key, '_', '-');
  return "--" + key;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw UsageError("--" + key + ": cannot parse '" + text + "'");
  return v;
}

fs::path parent_or_cwd(const fs::path& p) { return p.parent_path().empty() ? fs::path(".") : p.parent_path(); }

std::vector<fs::path> files_with_extension(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  }
  std::ranges::sort(out);
  return out;
}

std::string relative_to(const fs::path& target, const fs::path& base) {
  return fs::relative(fs::absolute(target), fs::absolute(base)).generic_string();
}

// Same rows with every path re-expressed relative to `new_base`.
DatasetManifest rebase(const DatasetManifest& m, const fs::path& new_base) {
  DatasetManifest out{m.rows, new_base};
  for (auto& r : out.rows) {
    for (std::string* p : {&r.ct_path, &r.frontal_path, &r.lateral_path}) {
      if (!p->empty()) *p = relative_to(m.resolve(*p), new_base);
    }
  }
  return out;
}

std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

ParamStore checkpoint_weights(const Settings& s, const ModelConfig& m) {
  const Checkpoint ckpt = load_checkpoint(s.require("checkpoint"));
  ParamStore params;
  if (s.flag("ema_weights", false)) {
    if (!ckpt.ema) throw Error("checkpoint has no EMA weights");
    params = *ckpt.ema;
  } else {
    params = ckpt.params;
  }
  if (!params.same_layout(init_params(m))) {
    throw Error("checkpoint does not match the model configuration (input_size, dense_units, base_channels, "
                "use_backprojection)");
  }
  return params;
}

void write_pgm(const Image2D& img, bool hu, const fs::path& path) {
  std::string bytes = "P5\n" + std::to_string(img.cols()) + " " + std::to_string(img.rows()) + "\n255\n";
  for (float v : img.data()) {
    const float u = hu ? (v + 1000.0f) / 2000.0f : v;
    bytes.push_back(static_cast<char>(std::lround(std::clamp(u, 0.0f, 1.0f) * 255.0f)));
  }
  write_file(path.string(), bytes);
}

SliceAxis parse_axis(const std::string& s) {
  if (s == "axial") return SliceAxis::Axial;
  if (s == "coronal") return SliceAxis::Coronal;
  if (s == "sagittal") return SliceAxis::Sagittal;
  throw UsageError("--axis must be axial, coronal or sagittal, got '" + s + "'");
}

View parse_view(const std::string& s) {
  if (s == "frontal") return View::Frontal;
  if (s == "lateral") return View::Lateral;
  throw UsageError("--view must be frontal or lateral, got '" + s + "'");
}

std::vector<Image2D> load_images(const fs::path& dir) {
  std::vector<Image2D> out;
  for (const auto& p : files_with_extension(dir, ".ximg")) out.push_back(load_image(p.string()));
  if (out.empty()) throw Error("no .ximg images in " + dir.string());
  return out;
}

}  // namespace

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = [] {
    std::set<std::string> all;
    for (const auto& o : kCommon) all.insert(o.key);
    for (const auto& c : commands())
      for (const auto& o : c.options) all.insert(o.key);
    return std::vector<std::string>(all.begin(), all.end());
  }();
  return keys;
}

Settings Settings::parse(const std::string& text) {
  Settings s;
  std::istringstream in(text);
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (!std::ranges::binary_search(known_keys(), key)) {
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    s.set(key, trim(line.substr(eq + 1)));
  }
  return s;
}

Settings Settings::load(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  return parse(read_file(path.string()));
}

void Settings::set(const std::string& key, std::string value) { values_[key] = std::move(value); }

std::string Settings::str(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string Settings::require(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end() || it->second.empty()) throw UsageError(dashed(key) + " is required");
  return it->second;
}

std::uint64_t Settings::u64(const std::string& key, std::uint64_t fallback) const {
  return has(key) ? parse_number<std::uint64_t>(key, values_.at(key)) : fallback;
}

double Settings::real(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const double v = parse_number<double>(key, values_.at(key));
  if (!std::isfinite(v)) throw UsageError(dashed(key) + " must be finite");
  return v;
}

bool Settings::flag(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = values_.at(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError(dashed(key) + ": expected true or false, got '" + v + "'");
}

std::string Settings::encode() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

ModelConfig model_config(const Settings& s) {
  ModelConfig m;
  m.input_size = s.u64("input_size", m.input_size);
  m.dense_units = s.u64("dense_units", m.dense_units);
  m.base_channels = s.u64("base_channels", m.base_channels);
  m.use_backprojection = s.flag("use_backprojection", m.use_backprojection);
  m.seed = s.u64("seed", 0);
  m.validate();
  return m;
}

TrainConfig train_config(const Settings& s) {
  TrainConfig t;
  t.loss = parse_loss(s.str("loss", to_string(t.loss)));
  t.epochs = s.u64("epochs", t.epochs);
  t.batch_size = s.u64("batch_size", t.batch_size);
  t.seed = s.u64("seed", 0);
  t.checkpoint_every = s.u64("checkpoint_every", t.checkpoint_every);
  t.use_ema = s.flag("use_ema", t.use_ema);
  t.prior_head_bias = s.flag("prior_head_bias", t.prior_head_bias);
  t.ema.decay = s.real("ema_decay", t.ema.decay);
  t.ema.reset_interval = s.u64("ema_reset_interval", t.ema.reset_interval);
  t.validate();
  return t;
}

OptimizerConfig optimizer_config(const Settings& s, OptimizerKind fallback_kind, double fallback_lr) {
  OptimizerConfig o;
  o.kind = s.has("optimizer") ? parse_optimizer(s.str("optimizer", "")) : fallback_kind;
  o.learning_rate = s.real("learning_rate", fallback_lr);
  o.beta1 = s.real("beta1", o.beta1);
  o.beta2 = s.real("beta2", o.beta2);
  o.epsilon = s.real("epsilon", o.epsilon);
  o.validate();
  return o;
}

StyleConfig style_config(const Settings& s) {
  StyleConfig c;
  c.lambda_cyc = s.real("lambda_cyc", c.lambda_cyc);
  c.gen_channels = s.u64("gen_channels", c.gen_channels);
  c.disc_channels = s.u64("disc_channels", c.disc_channels);
  c.steps = s.u64("steps", c.steps);
  c.seed = s.u64("seed", 0);
  c.optimizer = optimizer_config(s, OptimizerKind::Nadam, c.optimizer.learning_rate);
  c.use_ema = s.flag("use_ema", c.use_ema);
  c.ema.decay = s.real("ema_decay", c.ema.decay);
  c.ema.reset_interval = s.u64("ema_reset_interval", c.ema.reset_interval);
  return c;
}

std::string default_model_name(const ModelConfig& cfg, InputSource source) {
  std::string name = std::to_string(cfg.dense_units) + (cfg.use_backprojection ? "-ProjInj" : "-Dense");
  if (source == InputSource::Stylized) name += "-Styled-Inputs";
  return name;
}

std::string report_header() { return "model_name\tinput_xray_images\ttraining_loss_function\toptimizer\ttest_mse\n"; }

void cmd_phantom(const Settings& s, std::ostream& out) {
  const fs::path dir = s.require("out");
  const std::size_t size = s.u64("size", 64), count = s.u64("count", 1);
  const std::string domain = s.str("domain", "hu"), prefix = s.str("prefix", "phantom");
  const std::uint64_t seed = s.u64("seed", 0);
  if (domain != "hu" && domain != "unit") throw UsageError("--domain must be hu or unit");
  if (size < 8) throw UsageError("--size must be at least 8");
  const bool hu = domain == "hu";
  std::optional<float> constant;
  if (s.has("constant")) {
    constant = static_cast<float>(s.real("constant", 0.0));
    if (!hu && (*constant < 0.0f || *constant > 1.0f)) throw UsageError("--constant must lie in [0, 1] for unit volumes");
  }
  fs::create_directories(dir);
  for (std::size_t i = 0; i < count; ++i) {
    Volume3D v;
    if (constant) {
      v = Volume3D::filled(size, *constant, hu ? Domain::HU : Domain::Unit);
    } else {
      const Volume3D u = make_phantom(derive_seed(seed, "phantom/" + std::to_string(i)), size);
      if (hu) {
        std::vector<float> h(u.data().begin(), u.data().end());
        for (auto& x : h) x = x * 2000.0f - 1000.0f;
        v = Volume3D(size, size, size, std::move(h), Domain::HU);
      } else {
        v = u;
      }
    }
    char name[64];
    std::snprintf(name, sizeof name, "%s_%04zu.xvol", prefix.c_str(), i);
    save_volume(v, (dir / name).string());
    out << (dir / name).string() << "\n";
  }
}

void cmd_ingest(const Settings& s, std::ostream& out) {
  const fs::path input = s.require("input"), manifest_path = s.require("out");
  const std::size_t size = s.u64("size", 64), test_count = s.u64("test_count", 0);
  const double ratio = s.real("ratio", 0.8);
  const std::uint64_t seed = s.u64("seed", 0);
  if (size < 2) throw UsageError("--size must be at least 2");
  if (!(ratio > 0.0 && ratio < 1.0)) throw UsageError("--ratio must lie in (0, 1)");

  const auto files = files_with_extension(input, ".xvol");
  if (files.empty()) throw Error("no .xvol volumes in " + input.string());
  const fs::path base = parent_or_cwd(manifest_path);
  fs::create_directories(base / "volumes");

  std::vector<ManifestRow> rows;
  std::size_t skipped = 0;
  for (const auto& f : files) {
    const std::string id = f.stem().string();
    try {
      const Volume3D v = load_volume(f.string());
      if (v.domain() != Domain::HU) throw InvalidInput("expected an HU volume");
      const std::string rel = "volumes/" + id + ".xvol";
      save_volume(resize_volume(normalize_hu(v), size), (base / rel).string());
      rows.push_back({id, rel, "", ""});
    } catch (const Error& e) {
      out << "skipped " << f.string() << ": " << e.what() << "\n";
      ++skipped;
    }
  }
  if (rows.empty()) throw Error("none of the " + std::to_string(files.size()) + " volumes could be ingested");
  if (test_count >= rows.size()) {
    throw UsageError("--test-count must leave at least one row for training (have " + std::to_string(rows.size()) +
                     ")");
  }

  const auto order = seeded_permutation(rows.size(), derive_seed(seed, "test-tranche"));
  std::vector<bool> is_test(rows.size(), false);
  for (std::size_t i = 0; i < test_count; ++i) is_test[order[i]] = true;
  DatasetManifest m;
  m.base_dir = base;
  std::vector<ManifestRow> rest;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (is_test[i]) {
      rows[i].split = Split::Test;
      m.rows.push_back(rows[i]);
    } else {
      rest.push_back(rows[i]);
    }
  }
  std::size_t n_train = rest.size(), n_val = 0;
  if (rest.size() > 1) {
    auto [train, val] = split_dataset(rest, ratio, seed);
    n_train = train.size();
    n_val = val.size();
    m.rows.insert(m.rows.end(), train.begin(), train.end());
    m.rows.insert(m.rows.end(), val.begin(), val.end());
  } else {
    m.rows.insert(m.rows.end(), rest.begin(), rest.end());
  }
  std::ranges::sort(m.rows, {}, &ManifestRow::id);
  write_manifest(m, manifest_path);
  out << "ingested " << rows.size() << " volumes (" << n_train << " train, " << n_val << " val, " << test_count
      << " test";
  if (skipped > 0) out << ", " << skipped << " skipped";
  out << ") -> " << manifest_path.string() << "\n";
}

void cmd_project(const Settings& s, std::ostream& out) {
  const fs::path manifest_path = s.require("manifest");
  const fs::path out_path = s.str("out", manifest_path.string());
  const DatasetManifest in = read_manifest(manifest_path);
  const fs::path base = parent_or_cwd(out_path);
  DatasetManifest m = rebase(in, base);
  fs::create_directories(base / "projections");
  std::string problems;
  for (auto& row : m.rows) {
    try {
      const Volume3D v = load_volume(m.resolve(row.ct_path).string());
      row.frontal_path = "projections/" + row.id + "_frontal.ximg";
      row.lateral_path = "projections/" + row.id + "_lateral.ximg";
      save_image(mean_project(v, View::Frontal), m.resolve(row.frontal_path).string());
      save_image(mean_project(v, View::Lateral), m.resolve(row.lateral_path).string());
      row.input_source = InputSource::Mean;
    } catch (const Error& e) {
      problems += "  " + row.id + ": " + e.what() + "\n";
    }
  }
  if (!problems.empty()) throw Error("could not project every row:\n" + problems);
  write_manifest(m, out_path);
  out << "projected " << m.rows.size() << " rows -> " << out_path.string() << "\n";
}

void cmd_backproject(const Settings& s, std::ostream& out) {
  const Image2D f = load_image(s.require("frontal"));
  const Image2D l = load_image(s.require("lateral"));
  const std::string path = s.require("out");
  save_volume(fuse_backprojections(f, l), path);
  out << path << "\n";
}

void cmd_train(const Settings& s, std::ostream& out) {
  const fs::path dir = s.require("out");
  const DatasetManifest manifest = read_manifest(s.require("manifest"));
  manifest.validate();
  const ModelConfig m = model_config(s);
  const TrainConfig t = train_config(s);
  const OptimizerConfig o = optimizer_config(s, OptimizerKind::Adam, 1e-4);
  const auto samples = load_samples(manifest, Split::Train);
  const auto rows = manifest.rows_in(Split::Train);
  const bool stylized =
      !rows.empty() && std::ranges::all_of(rows, [](const ManifestRow& r) { return r.input_source == InputSource::Stylized; });

  fs::create_directories(dir);
  TrainHooks hooks;
  hooks.wall_clock = s.flag("wall_clock", false);
  hooks.on_checkpoint = [&](std::uint64_t step, const ParamStore& params, const EmaState* ema) {
    char name[32];
    std::snprintf(name, sizeof name, "step_%06llu.xckpt", static_cast<unsigned long long>(step));
    Checkpoint c{params, ema ? std::optional<ParamStore>(ema->shadow()) : std::nullopt};
    save_checkpoint(c, (dir / name).string());
  };
  const TrainResult r = train(m, t, o, samples, hooks);

  Checkpoint final{r.params, r.ema ? std::optional<ParamStore>(r.ema->shadow()) : std::nullopt};
  save_checkpoint(final, (dir / "model.xckpt").string());
  write_file((dir / "train_log.tsv").string(), encode_log(r.log));

  Settings model;
  model.set("input_size", std::to_string(m.input_size));
  model.set("dense_units", std::to_string(m.dense_units));
  model.set("base_channels", std::to_string(m.base_channels));
  model.set("use_backprojection", m.use_backprojection ? "true" : "false");
  model.set("seed", std::to_string(m.seed));
  model.set("loss", to_string(t.loss));
  model.set("optimizer", to_string(o.kind));
  model.set("model_name",
            s.str("model_name", default_model_name(m, stylized ? InputSource::Stylized : InputSource::Mean)));
  write_file((dir / "model.cfg").string(), model.encode());

  out << "trained " << r.log.size() << " steps on " << samples.size() << " samples";
  if (!r.log.empty()) out << ", last loss " << format_fixed(r.log.back().value, 6);
  out << " -> " << (dir / "model.xckpt").string() << "\n";
}

void cmd_predict(const Settings& s, std::ostream& out) {
  const ModelConfig m = model_config(s);
  const ParamStore params = checkpoint_weights(s, m);
  const Image2D f = load_image(s.require("frontal"));
  const Image2D l = load_image(s.require("lateral"));
  const std::string path = s.require("out");
  save_volume(forward(params, m, f, l), path);
  out << path << "\n";
}

void cmd_eval(const Settings& s, std::ostream& out) {
  const DatasetManifest manifest = read_manifest(s.require("manifest"));
  const fs::path report = s.require("out");
  const ModelConfig m = model_config(s);
  const ParamStore params = checkpoint_weights(s, m);
  const auto rows = manifest.rows_in(Split::Test);
  if (rows.empty()) throw Error("manifest has no test rows");

  double total = 0.0;
  for (const auto& sample : load_samples(manifest, Split::Test)) {
    total += mse(forward(params, m, sample.frontal, sample.lateral), sample.label);
  }
  const double test_mse = total / static_cast<double>(rows.size());
  const InputSource source = rows.front().input_source;
  const bool mixed = std::ranges::any_of(rows, [&](const ManifestRow& r) { return r.input_source != source; });
  const std::string source_name = mixed ? "mixed" : to_string(source);

  const std::string line = s.str("model_name", default_model_name(m, source)) + "\t" + source_name + "\t" +
                           to_string(parse_loss(s.str("loss", "MAE"))) + "\t" +
                           to_string(parse_optimizer(s.str("optimizer", "Adam"))) + "\t" + format_fixed(test_mse, 4) +
                           "\n";
  const bool fresh = !fs::exists(report) || fs::file_size(report) == 0;
  if (!report.parent_path().empty()) fs::create_directories(report.parent_path());
  std::ofstream f(report, std::ios::binary | std::ios::app);
  if (!f) throw Error("cannot open report " + report.string());
  if (fresh) f << report_header();
  f << line;
  if (!f) throw Error("failed writing report " + report.string());
  out << line;
}

bool cmd_gradcheck(const Settings& s, std::ostream& out) {
  Settings with_defaults = s;
  if (!s.has("input_size")) with_defaults.set("input_size", "8");
  const ModelConfig m = model_config(with_defaults);
  GradCheckOptions opts;
  opts.samples_per_tensor = s.u64("samples", opts.samples_per_tensor);
  opts.loss = parse_loss(s.str("loss", "MSE"));
  opts.seed = s.u64("seed", 0);
  const double tol = s.real("tolerance", 1e-3);
  const GradCheckReport r = grad_check(m, tol, opts);
  out << "tensor\tsampled\tmax_rel_error\tstatus\n";
  char err[32];
  for (const auto& t : r.tensors) {
    std::snprintf(err, sizeof err, "%.3e", t.max_error);
    out << t.name << "\t" << t.sampled << "\t" << err << "\t" << (t.passed ? "ok" : "FAIL") << "\n";
  }
  const auto failed = std::ranges::count_if(r.tensors, [](const TensorCheck& t) { return !t.passed; });
  out << (failed == 0 ? "all " + std::to_string(r.tensors.size()) + " tensors within " : std::to_string(failed) + " tensors above ")
      << tol << "\n";
  return failed == 0;
}

void cmd_style_train(const Settings& s, std::ostream& out) {
  const fs::path dir = s.require("out");
  const auto x = load_images(s.require("x_dir"));
  const auto y = load_images(s.require("y_dir"));
  StyleConfig c = style_config(s);
  c.image_size = x.front().rows();
  const StyleResult r = style_train(c, x, y);

  fs::create_directories(dir);
  Checkpoint ckpt{r.generators, r.ema ? std::optional<ParamStore>(r.ema->shadow()) : std::nullopt};
  save_checkpoint(ckpt, (dir / "generators.xckpt").string());
  write_file((dir / "style_log.tsv").string(), encode_style_log(r.log));
  out << "trained " << r.log.size() << " style steps";
  if (!r.log.empty()) out << ", last cycle loss " << format_fixed(r.log.back().cycle, 6);
  out << " -> " << (dir / "generators.xckpt").string() << "\n";

  if (!s.has("manifest")) return;
  const View view = parse_view(s.str("view", "frontal"));
  const std::string vname = view == View::Frontal ? "frontal" : "lateral";
  const ParamStore& gens = r.ema ? r.ema->shadow() : r.generators;
  DatasetManifest m = rebase(read_manifest(s.require("manifest")), dir);
  fs::create_directories(dir / "stylized");
  for (auto& row : m.rows) {
    std::string& path = view == View::Frontal ? row.frontal_path : row.lateral_path;
    if (path.empty()) throw Error("row '" + row.id + "' has no " + vname + " projection; run project first");
    const Image2D styled = stylize(gens, load_image(m.resolve(path).string()));
    path = "stylized/" + row.id + "_" + vname + ".ximg";
    save_image(styled, m.resolve(path).string());
    row.input_source = InputSource::Stylized;
  }
  write_manifest(m, dir / "manifest.tsv");
  out << "stylized " << m.rows.size() << " " << vname << " images -> " << (dir / "manifest.tsv").string() << "\n";
}

void cmd_export_slice(const Settings& s, std::ostream& out) {
  const Volume3D v = load_volume(s.require("volume"));
  const SliceAxis axis = parse_axis(s.str("axis", "axial"));
  const std::size_t index = parse_number<std::size_t>("index", s.require("index"));
  const std::size_t extent = axis == SliceAxis::Axial ? v.dz() : axis == SliceAxis::Coronal ? v.dy() : v.dx();
  if (index >= extent) {
    throw UsageError("--index " + std::to_string(index) + " out of range for extent " + std::to_string(extent));
  }
  const Image2D img = export_slice(v, axis, index);
  const fs::path path = s.require("out");
  if (path.extension() == ".pgm") {
    write_pgm(img, v.domain() == Domain::HU, path);
  } else {
    save_image(img, path.string());
  }
  out << path.string() << "\n";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Biplanar X-ray to CT reconstruction toolkit", "xprospect"};
  app.require_subcommand(1);
  app.fallthrough(false);

  struct Bound {
    const CommandSpec* spec;
    CLI::App* app;
    std::map<std::string, std::string> values;
    std::map<std::string, bool> flags;
    std::vector<std::tuple<std::string, CLI::Option*, bool>> options;
  };
  std::vector<std::unique_ptr<Bound>> bound;
  for (const auto& spec : commands()) {
    auto b = std::make_unique<Bound>();
    b->spec = &spec;
    b->app = app.add_subcommand(spec.name, spec.help);
    for (const auto* list : {&kCommon, &spec.options}) {
      for (const auto& o : *list) {
        CLI::Option* opt = o.is_flag ? b->app->add_flag(dashed(o.key), b->flags[o.key], o.help)
                                     : b->app->add_option(dashed(o.key), b->values[o.key], o.help);
        b->options.emplace_back(o.key, opt, o.is_flag);
      }
    }
    bound.push_back(std::move(b));
  }

  std::vector<const char*> argv{"xprospect"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  for (const auto& b : bound) {
    if (!b->app->parsed()) continue;
    const std::string name = b->spec->name;
    try {
      Settings s;
      if (!b->values["config"].empty()) s = Settings::load(b->values["config"]);
      for (const auto& [key, opt, is_flag] : b->options) {
        if (opt->count() == 0) continue;
        s.set(key, is_flag ? "true" : b->values[key]);
      }
      if (name == "phantom") cmd_phantom(s, out);
      else if (name == "ingest") cmd_ingest(s, out);
      else if (name == "project") cmd_project(s, out);
      else if (name == "backproject") cmd_backproject(s, out);
      else if (name == "train") cmd_train(s, out);
      else if (name == "predict") cmd_predict(s, out);
      else if (name == "eval") cmd_eval(s, out);
      else if (name == "gradcheck") return cmd_gradcheck(s, out) ? 0 : 1;
      else if (name == "style-train") cmd_style_train(s, out);
      else if (name == "export-slice") cmd_export_slice(s, out);
      return 0;
    } catch (const UsageError& e) {
      err << "xprospect " << name << ": " << e.what() << "\n" << b->app->help();
      return 2;
    } catch (const ConfigError& e) {
      err << "xprospect " << name << ": " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      err << "xprospect " << name << ": " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}

}  // namespace xprospect::cli
