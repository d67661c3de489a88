#include "unimom/cli/config.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "unimom/error.hpp"

namespace unimom::cli {

namespace {

using json = nlohmann::json;

class Reader {
 public:
  Reader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) fail("", "must be a JSON object");
  }

  void check_keys(std::initializer_list<const char*> allowed) const {
    for (const auto& [key, value] : obj_.items()) {
      bool known = false;
      for (const char* a : allowed) known = known || key == a;
      if (!known) fail(key, "unknown key");
    }
  }

  bool has(const char* key) const { return obj_.contains(key); }
  const json& at(const char* key) const { return obj_.at(key); }

  template <typename T>
  void get(const char* key, T& out) const {
    if (!obj_.contains(key)) return;
    const json& v = obj_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(key, "expected true or false");
      out = v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(key, "expected a string");
      out = v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(key, "expected a number");
      out = v.get<T>();
    } else if constexpr (std::is_signed_v<T>) {
      if (!v.is_number_integer()) fail(key, "expected an integer");
      out = v.get<T>();
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) fail(key, "expected a non-negative integer");
      out = v.get<T>();
    } else {
      if (!v.is_array() || v.empty()) fail(key, "expected a non-empty list");
      out.clear();
      for (const json& x : v) {
        if (!x.is_number_unsigned() || x.get<std::size_t>() == 0) fail(key, "expected positive integers");
        out.push_back(x.get<std::size_t>());
      }
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& why) const {
    throw DataError(where_ + (key.empty() ? "" : ": " + key) + ": " + why);
  }

 private:
  const json& obj_;
  std::string where_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw DataError("config: " + what);
}

}  // namespace

void validate(const RunConfig& c) {
  const backtest::BacktestConfig& b = c.backtest;
  require(b.first_train_years >= 1, "first_train_years must be >= 1");
  require(b.validation_fraction > 0.0 && b.validation_fraction < 1.0,
          "validation_fraction must be in (0, 1)");
  require(b.grid_budget >= 1, "grid_budget must be >= 1");
  require(b.sequence_length >= 1, "sequence_length must be >= 1");
  require(b.train.batch_window >= 2, "batch_window must be >= 2");
  require(b.train.max_epochs >= 2, "max_epochs must be >= 2");
  require(b.train.patience >= 1 && b.train.patience < b.train.max_epochs,
          "patience must be in [1, max_epochs)");
  require(b.train.adam.learning_rate > 0.0, "learning_rate must be > 0");
  require(b.train.loss.tau > 0.0, "tau must be > 0");
  require(b.cost_rate >= 0.0, "cost_rate must be >= 0");
  require(b.vol_target > 0.0, "vol_target must be > 0");
  require(b.mvo.min_history >= 2, "mvo.min_history must be >= 2");
  require(b.mvo.rebalance_every >= 1, "mvo.rebalance_every must be >= 1");
  require(b.mvo.resolution >= 1, "mvo.resolution must be >= 1");
  require(b.jobs >= 1, "jobs must be >= 1");
  require(c.loss == "both" || losses::parse_sharpe_term(c.loss).has_value(),
          "loss must be softcap, sharpe, softcap-symmetric or both");
}

RunConfig parse_run_config(std::string_view text, std::string_view origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string(origin) + ": invalid JSON: " + e.what());
  }
  const std::string where(origin);
  Reader r(root, where);
  r.check_keys({"seed", "first_train_years", "validation_fraction", "grid_budget", "full_grid",
                "grid", "relaxed_model_sizes", "sequence_length", "batch_window", "max_epochs",
                "patience", "max_batches_per_epoch", "learning_rate", "tau", "loss", "cost_rate",
                "vol_target", "mvo", "jobs"});
  RunConfig c;
  backtest::BacktestConfig& b = c.backtest;
  r.get("seed", b.seed);
  b.train.seed = b.seed;
  r.get("first_train_years", b.first_train_years);
  r.get("validation_fraction", b.validation_fraction);
  r.get("grid_budget", b.grid_budget);
  r.get("full_grid", b.full_grid);
  if (r.has("grid")) {
    Reader g(r.at("grid"), where + ": grid");
    g.check_keys({"lstm_layers", "lstm_hidden", "n_experts", "task_layers", "task_hidden"});
    g.get("lstm_layers", b.grid.lstm_layers);
    g.get("lstm_hidden", b.grid.lstm_hidden);
    g.get("n_experts", b.grid.n_experts);
    g.get("task_layers", b.grid.task_layers);
    g.get("task_hidden", b.grid.task_hidden);
  }
  bool relaxed = false;
  r.get("relaxed_model_sizes", relaxed);
  b.validation = relaxed ? model::Validation::kRelaxed : model::Validation::kStrict;
  r.get("sequence_length", b.sequence_length);
  r.get("batch_window", b.train.batch_window);
  r.get("max_epochs", b.train.max_epochs);
  r.get("patience", b.train.patience);
  r.get("max_batches_per_epoch", b.train.max_batches_per_epoch);
  r.get("learning_rate", b.train.adam.learning_rate);
  r.get("tau", b.train.loss.tau);
  r.get("loss", c.loss);
  if (auto term = losses::parse_sharpe_term(c.loss)) b.train.loss.term = *term;
  r.get("cost_rate", b.cost_rate);
  r.get("vol_target", b.vol_target);
  if (r.has("mvo")) {
    Reader m(r.at("mvo"), where + ": mvo");
    m.check_keys({"min_history", "rebalance_every", "resolution"});
    m.get("min_history", b.mvo.min_history);
    m.get("rebalance_every", b.mvo.rebalance_every);
    m.get("resolution", b.mvo.resolution);
  }
  r.get("jobs", b.jobs);
  validate(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.string());
}

}  // namespace unimom::cli
