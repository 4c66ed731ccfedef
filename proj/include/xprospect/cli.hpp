#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "xprospect/error.hpp"
#include "xprospect/optim.hpp"
#include "xprospect/reconnet.hpp"
#include "xprospect/styler.hpp"
#include "xprospect/trainer.hpp"

namespace xprospect::cli {

/// Bad arguments; the CLI exits with status 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Flat key=value settings. Config files use one pair per line with `#`
/// comments; flags given on the command line replace file values.
class Settings {
 public:
  /// Throws ConfigError naming the line for malformed or unknown keys.
  static Settings parse(const std::string& text);
  static Settings load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value);
  bool has(const std::string& key) const { return values_.contains(key); }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string str(const std::string& key, const std::string& fallback) const;
  /// Throws UsageError when the key is missing.
  std::string require(const std::string& key) const;
  std::uint64_t u64(const std::string& key, std::uint64_t fallback) const;
  double real(const std::string& key, double fallback) const;
  bool flag(const std::string& key, bool fallback) const;

  /// key=value lines in key order.
  std::string encode() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Every key understood by some command.
const std::vector<std::string>& known_keys();

ModelConfig model_config(const Settings& s);
TrainConfig train_config(const Settings& s);
OptimizerConfig optimizer_config(const Settings& s, OptimizerKind fallback_kind, double fallback_lr);
StyleConfig style_config(const Settings& s);

/// Report name such as "64-Dense", "512-ProjInj-Styled-Inputs".
std::string default_model_name(const ModelConfig& cfg, InputSource source);

// Commands. Each reads its inputs from settings and reports on `out`.
void cmd_phantom(const Settings& s, std::ostream& out);
void cmd_ingest(const Settings& s, std::ostream& out);
void cmd_project(const Settings& s, std::ostream& out);
void cmd_backproject(const Settings& s, std::ostream& out);
void cmd_train(const Settings& s, std::ostream& out);
void cmd_predict(const Settings& s, std::ostream& out);
void cmd_eval(const Settings& s, std::ostream& out);
/// Returns false when some tensor fails the tolerance.
bool cmd_gradcheck(const Settings& s, std::ostream& out);
void cmd_style_train(const Settings& s, std::ostream& out);
void cmd_export_slice(const Settings& s, std::ostream& out);

/// Header of the evaluation report.
std::string report_header();

/// Full command line: `xprospect <command> [flags]`. Returns the exit code
/// (0 ok, 1 runtime failure, 2 usage error).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace xprospect::cli
