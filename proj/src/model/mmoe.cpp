#include "unimom/model/mmoe.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "unimom/diff/ops.hpp"
#include "unimom/error.hpp"

namespace unimom::model {

using diff::Parameter;
using diff::Shape;
using diff::Tape;
using diff::Tensor;
using diff::Var;
using features::kNumFeatures;

namespace {

constexpr double kPoolStdFloor = 1e-8;

void check_domain(const char* field, std::size_t value, std::initializer_list<std::size_t> allowed) {
  if (std::find(allowed.begin(), allowed.end(), value) != allowed.end()) return;
  std::string list;
  for (std::size_t a : allowed) list += (list.empty() ? "" : ", ") + std::to_string(a);
  throw Error(std::string("config field ") + field + " = " + std::to_string(value) +
              " outside {" + list + "}");
}

// Sizes of each layer of an FNN: in -> hidden x (layers - 1) -> out.
std::vector<std::size_t> fnn_dims(std::size_t in, std::size_t hidden, std::size_t layers,
                                  std::size_t out) {
  std::vector<std::size_t> dims{in};
  for (std::size_t l = 0; l + 1 < layers; ++l) dims.push_back(hidden);
  dims.push_back(out);
  return dims;
}

struct Builder {
  std::mt19937_64 rng;
  std::vector<Parameter> params;

  void glorot(std::string name, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Tensor t(Shape{fan_in, fan_out});
    for (double& v : t.values()) v = u(rng);
    params.push_back({std::move(name), std::move(t)});
  }
  void bias(std::string name, std::size_t n, double fill = 0.0) {
    params.push_back({std::move(name), Tensor(Shape{n}, fill)});
  }
  void fnn(const std::string& prefix, const std::vector<std::size_t>& dims) {
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const std::string p = prefix + ".l" + std::to_string(l);
      glorot(p + ".w", dims[l], dims[l + 1]);
      bias(p + ".b", dims[l + 1]);
    }
  }
};

// Walks the parameter leaves in construction order.
class Cursor {
 public:
  explicit Cursor(std::span<const Var> v) : v_(v) {}
  const Var& next() {
    if (pos_ >= v_.size()) throw Error("forward: too few parameter leaves");
    return v_[pos_++];
  }
  void skip(std::size_t n) { pos_ += n; }
  std::size_t position() const { return pos_; }

 private:
  std::span<const Var> v_;
  std::size_t pos_ = 0;
};

// Affine layers with tanh after each hidden layer; the caller applies the
// output activation.
Var apply_fnn(Cursor& c, Var x, std::size_t layers) {
  for (std::size_t l = 0; l < layers; ++l) {
    const Var& w = c.next();
    const Var& b = c.next();
    x = diff::add(diff::matmul(x, w), b);
    if (l + 1 < layers) x = diff::tanh(x);
  }
  return x;
}

Var gate(Cursor& c, const Var& x) {
  const Var& w = c.next();
  const Var& b = c.next();
  return diff::softmax(diff::add(diff::matmul(x, w), b));
}

}  // namespace

void validate(const MmoeConfig& c, Validation mode) {
  if (mode == Validation::kStrict) {
    check_domain("lstm_layers", c.lstm_layers, {1, 2, 3});
    check_domain("lstm_hidden", c.lstm_hidden, {64, 126, 252, 512});
    check_domain("n_experts", c.n_experts, {3, 6, 9, 12});
    check_domain("task_layers", c.task_layers, {2, 3, 4});
    check_domain("task_hidden", c.task_hidden, {64, 126, 252, 512});
  }
  const std::pair<const char*, std::size_t> sizes[] = {
      {"n_experts", c.n_experts},     {"lstm_layers", c.lstm_layers},
      {"lstm_hidden", c.lstm_hidden}, {"task_layers", c.task_layers},
      {"task_hidden", c.task_hidden}, {"sequence_length", c.sequence_length}};
  for (const auto& [name, v] : sizes) {
    if (v == 0) throw Error(std::string("config field ") + name + " must be positive");
  }
}

std::string describe(const MmoeConfig& c) {
  return "layers=" + std::to_string(c.lstm_layers) + " hidden=" + std::to_string(c.lstm_hidden) +
         " experts=" + std::to_string(c.n_experts) + " task_layers=" +
         std::to_string(c.task_layers) + " task_hidden=" + std::to_string(c.task_hidden) +
         " seq=" + std::to_string(c.sequence_length);
}

MmoeModel init_model(const MmoeConfig& config, Validation mode) {
  validate(config, mode);
  Builder b{std::mt19937_64(config.seed), {}};
  const std::size_t H = config.lstm_hidden;
  for (std::size_t e = 0; e < config.n_experts; ++e) {
    for (std::size_t l = 0; l < config.lstm_layers; ++l) {
      const std::string p = "expert" + std::to_string(e) + ".lstm" + std::to_string(l);
      b.glorot(p + ".wx", l == 0 ? kNumFeatures : H, 4 * H);
      b.glorot(p + ".wh", H, 4 * H);
      Tensor bias(Shape{4 * H}, 0.0);
      std::fill(bias.data() + H, bias.data() + 2 * H, 1.0);  // forget gate
      b.params.push_back({p + ".b", std::move(bias)});
    }
  }
  for (const char* task : kTaskNames) {
    b.glorot(std::string("gate.") + task + ".w", kNumFeatures, config.n_experts);
    b.bias(std::string("gate.") + task + ".b", config.n_experts);
  }
  b.glorot("gate.can.w", kNumFeatures, kNumTasks);
  b.bias("gate.can.b", kNumTasks);
  for (const char* task : kTaskNames) {
    b.fnn(std::string("head.") + task, fnn_dims(H, config.task_hidden, config.task_layers, 1));
  }
  b.fnn("can", fnn_dims(kCanInputs, config.task_hidden, config.task_layers, kNumTasks));

  MmoeModel m;
  m.config_ = config;
  m.params_ = std::move(b.params);
  return m;
}

std::size_t parameter_count(const MmoeConfig& c) {
  const std::size_t H = c.lstm_hidden;
  std::size_t n = 0;
  for (std::size_t l = 0; l < c.lstm_layers; ++l) {
    n += ((l == 0 ? kNumFeatures : H) + H + 1) * 4 * H;
  }
  n *= c.n_experts;
  n += kNumTasks * (kNumFeatures + 1) * c.n_experts + (kNumFeatures + 1) * kNumTasks;
  auto fnn = [&](std::size_t in, std::size_t out) {
    const auto dims = fnn_dims(in, c.task_hidden, c.task_layers, out);
    std::size_t s = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) s += (dims[l] + 1) * dims[l + 1];
    return s;
  };
  n += kNumTasks * fnn(H, 1) + fnn(kCanInputs, kNumTasks);
  return n;
}

std::vector<std::string> parameter_groups(const MmoeConfig& c) {
  std::vector<std::string> g;
  for (std::size_t e = 0; e < c.n_experts; ++e) g.push_back("expert" + std::to_string(e));
  for (const char* t : kTaskNames) g.push_back(std::string("gate.") + t);
  g.push_back("gate.can");
  for (const char* t : kTaskNames) g.push_back(std::string("head.") + t);
  g.push_back("can");
  return g;
}

std::size_t MmoeModel::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

std::size_t MmoeModel::index_of(const std::string& name) const {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (params_[k].name == name) return k;
  }
  throw Error("no parameter named " + name);
}

bool MmoeModel::operator==(const MmoeModel& o) const {
  if (!(config_ == o.config_) || params_.size() != o.params_.size()) return false;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (params_[k].name != o.params_[k].name || !(params_[k].value == o.params_[k].value)) {
      return false;
    }
  }
  return true;
}

std::vector<Var> bind(Tape& tape, const MmoeModel& model, bool trainable) {
  std::vector<Var> out;
  out.reserve(model.parameters().size());
  for (const Parameter& p : model.parameters()) {
    out.push_back(trainable ? tape.variable(p.value) : tape.constant(p.value));
  }
  return out;
}

ForwardResult forward(Tape& tape, const MmoeModel& model, std::span<const Var> params,
                      const BatchInput& in, const std::array<Tensor, kNumTasks>* frozen) {
  const MmoeConfig& c = model.config();
  if (params.size() != model.parameters().size()) {
    throw Error("forward: expected " + std::to_string(model.parameters().size()) +
                " parameter leaves, got " + std::to_string(params.size()));
  }
  if (in.n_rows() == 0 || in.n_dates() == 0) throw Error("forward: batch has no active assets");
  if (in.seq_len != c.sequence_length) {
    throw Error("forward: batch sequence length " + std::to_string(in.seq_len) +
                " differs from model " + std::to_string(c.sequence_length));
  }
  const std::size_t R = in.n_rows();
  Cursor cur(params);
  ForwardResult out;

  const std::size_t lstm_leaves = 3 * c.lstm_layers * c.n_experts;
  const std::size_t gate_leaves = 2 * kNumTasks;
  if (frozen) {
    cur.skip(lstm_leaves + gate_leaves);
  } else {
    const Var seq = tape.constant(in.sequences);
    std::vector<Var> experts;
    for (std::size_t e = 0; e < c.n_experts; ++e) {
      Var h = seq;
      for (std::size_t l = 0; l < c.lstm_layers; ++l) {
        const Var& wx = cur.next();
        const Var& wh = cur.next();
        const Var& b = cur.next();
        h = diff::lstm_sequence(h, wx, wh, b, in.seq_len, l + 1 < c.lstm_layers);
      }
      experts.push_back(h);
    }
    const Var last = tape.constant(in.last_step);
    for (std::size_t k = 0; k < kNumTasks; ++k) out.task_gates[k] = gate(cur, last);
    std::array<Var, kNumTasks> mixtures;
    for (std::size_t k = 0; k < kNumTasks; ++k) {
      Var mix = diff::scale_rows(experts[0], diff::slice(out.task_gates[k], 0, 1));
      for (std::size_t e = 1; e < c.n_experts; ++e) {
        mix = diff::add(mix, diff::scale_rows(experts[e], diff::slice(out.task_gates[k], e, e + 1)));
      }
      mixtures[k] = mix;
    }
    // Heads follow the allocation gate in parameter order.
    const std::size_t heads_at = cur.position() + 2;
    Cursor heads(params.subspan(heads_at));
    for (std::size_t k = 0; k < kNumTasks; ++k) {
      out.scores[k] = diff::tanh(apply_fnn(heads, mixtures[k], c.task_layers));
    }
  }

  out.allocation_gate = gate(cur, tape.constant(in.date_mean));
  cur.skip(kNumTasks * 2 * c.task_layers);
  if (frozen) {
    for (std::size_t k = 0; k < kNumTasks; ++k) {
      const Tensor& t = (*frozen)[k];
      if (t.shape() != Shape{R, 1}) throw ShapeError("forward: frozen scores must be [R, 1]");
      out.scores[k] = tape.constant(t);
    }
  }

  std::vector<Var> can_in;
  for (std::size_t k = 0; k < kNumTasks; ++k) {
    const Var& y = out.scores[k];
    const Var parts[] = {diff::segment_mean(y, in.offsets),
                         diff::segment_std(y, in.offsets, kPoolStdFloor),
                         diff::segment_mean(diff::abs(y), in.offsets)};
    can_in.push_back(diff::scale_rows(diff::concat(parts), diff::slice(out.allocation_gate, k, k + 1)));
  }
  can_in.push_back(out.allocation_gate);
  out.allocation = diff::softmax(apply_fnn(cur, diff::concat(can_in), c.task_layers));
  if (cur.position() != params.size()) throw Error("forward: unused parameter leaves");
  return out;
}

Prediction predict(const MmoeModel& model, const BatchInput& input) {
  Tape tape(false);
  const std::vector<Var> leaves = bind(tape, model, false);
  const ForwardResult r = forward(tape, model, leaves, input);
  Prediction p;
  for (std::size_t k = 0; k < kNumTasks; ++k) {
    const auto v = r.scores[k].value().values();
    p.scores[k].assign(v.begin(), v.end());
  }
  const Tensor& w = r.allocation.value();
  p.allocation.resize(input.n_dates());
  for (std::size_t d = 0; d < input.n_dates(); ++d) {
    for (std::size_t k = 0; k < kNumTasks; ++k) p.allocation[d][k] = w.at(d, k);
  }
  return p;
}

namespace {

constexpr char kMagic[8] = {'U', 'N', 'I', 'M', 'O', 'M', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  if (!in) throw DataError("checkpoint truncated");
  return v;
}

}  // namespace

void save_checkpoint(const MmoeModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
  const MmoeConfig& c = model.config();
  for (std::uint64_t v : {std::uint64_t(c.n_experts), std::uint64_t(c.lstm_layers),
                          std::uint64_t(c.lstm_hidden), std::uint64_t(c.task_layers),
                          std::uint64_t(c.task_hidden), std::uint64_t(c.sequence_length), c.seed}) {
    put_u64(out, v);
  }
  put_u64(out, model.parameters().size());
  for (const Parameter& p : model.parameters()) {
    put_u64(out, p.name.size());
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u64(out, p.value.rank());
    for (std::size_t d : p.value.shape()) put_u64(out, d);
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
  if (!out) throw DataError("write failed for " + path.string());
}

MmoeModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError(path.string() + " is not a model checkpoint");
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (version != kVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  MmoeConfig c;
  c.n_experts = get_u64(in);
  c.lstm_layers = get_u64(in);
  c.lstm_hidden = get_u64(in);
  c.task_layers = get_u64(in);
  c.task_hidden = get_u64(in);
  c.sequence_length = get_u64(in);
  c.seed = get_u64(in);
  validate(c, Validation::kRelaxed);
  // The layout must match what init_model would build for this config.
  MmoeModel m = init_model(c, Validation::kRelaxed);
  const std::uint64_t count = get_u64(in);
  if (count != m.params_.size()) throw DataError(path.string() + ": parameter count mismatch");
  for (Parameter& p : m.params_) {
    const std::uint64_t len = get_u64(in);
    if (len > 4096) throw DataError(path.string() + ": corrupt parameter name");
    std::string name(len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(len));
    if (name != p.name) throw DataError(path.string() + ": unexpected parameter " + name);
    const std::uint64_t rank = get_u64(in);
    Shape shape(rank);
    for (auto& d : shape) d = get_u64(in);
    if (shape != p.value.shape()) throw DataError(path.string() + ": shape mismatch for " + name);
    in.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    if (!in) throw DataError("checkpoint truncated");
  }
  return m;
}

}  // namespace unimom::model
