#pragma once

#include <cstdint>
#include <map>
#include <random>

#include <json.hpp>

#include "splitsr/blocks.hpp"

namespace splitsr {

enum class HybridMode { Front, End, Mixed };
enum class ReplacementLocation { FeatureExtractionOnly, FEPlusUpsampling, Throughout };
enum class GroupKind { Standard, Lightweight };

inline std::string_view to_string(HybridMode m) {
  switch (m) {
    case HybridMode::Front: return "front";
    case HybridMode::End: return "end";
    case HybridMode::Mixed: return "mixed";
  }
  return "unknown";
}

inline std::string_view to_string(ReplacementLocation r) {
  switch (r) {
    case ReplacementLocation::FeatureExtractionOnly: return "feature_extraction";
    case ReplacementLocation::FEPlusUpsampling: return "fe_upsampling";
    case ReplacementLocation::Throughout: return "throughout";
  }
  return "unknown";
}

inline HybridMode parse_hybrid_mode(std::string_view s) {
  for (auto m : {HybridMode::Front, HybridMode::End, HybridMode::Mixed})
    if (s == to_string(m)) return m;
  throw std::invalid_argument("unknown hybrid_mode '" + std::string(s) + "'");
}

inline ReplacementLocation parse_replacement_location(std::string_view s) {
  for (auto r : {ReplacementLocation::FeatureExtractionOnly, ReplacementLocation::FEPlusUpsampling,
                 ReplacementLocation::Throughout})
    if (s == to_string(r)) return r;
  throw std::invalid_argument("unknown replacement_location '" + std::string(s) + "'");
}

struct NetworkConfig {
  std::size_t scale = 4;
  std::size_t feature_maps = 16;
  std::size_t groups = 5;
  std::size_t blocks_per_group = 6;
  double alpha = 0.25;
  std::size_t hybrid_index = 3;
  HybridMode hybrid_mode = HybridMode::Front;
  ReplacementLocation replacement_location = ReplacementLocation::FeatureExtractionOnly;
  BlockKind block_kind = BlockKind::SplitSR;
  double beta = 1.0;        // Idle-block expansion, only read when block_kind = idle
  bool mean_shift = false;  // subtract/add the DIV2K RGB mean around the network

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;

  static NetworkConfig latency_focused() { return {}; }

  static NetworkConfig accuracy_focused() {
    NetworkConfig c;
    c.groups = 7;
    c.blocks_per_group = 7;
    return c;
  }

  // Micro network for desk-scale training runs.
  static NetworkConfig toy() {
    NetworkConfig c;
    c.scale = 2;
    c.feature_maps = 8;
    c.groups = 2;
    c.blocks_per_group = 2;
    c.hybrid_index = 2;
    c.alpha = 0.5;
    return c;
  }

  static NetworkConfig preset(std::string_view name) {
    if (name == "latency") return latency_focused();
    if (name == "accuracy") return accuracy_focused();
    if (name == "toy") return toy();
    throw std::invalid_argument("unknown preset '" + std::string(name) + "'");
  }

  void validate() const {
    if (scale != 2 && scale != 4) throw std::invalid_argument("scale must be 2 or 4");
    if (feature_maps == 0) throw std::invalid_argument("feature_maps must be >= 1");
    if (groups == 0) throw std::invalid_argument("groups must be >= 1");
    if (blocks_per_group == 0) throw std::invalid_argument("blocks_per_group must be >= 1");
    if (hybrid_index > groups)
      throw std::invalid_argument("hybrid_index " + std::to_string(hybrid_index) + " exceeds groups " +
                                  std::to_string(groups));
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
    if (hybrid_index > 0) {
      if (block_kind == BlockKind::StandardResidual)
        throw std::invalid_argument("block_kind must be a lightweight kind when hybrid_index > 0");
      if (split_count(alpha, feature_maps) < 1) throw std::invalid_argument("round(alpha*feature_maps) is 0");
    }
  }

  // key=value lines, one per field, in a fixed order.
  std::string to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "scale=" << scale << "\n"
       << "feature_maps=" << feature_maps << "\n"
       << "groups=" << groups << "\n"
       << "blocks_per_group=" << blocks_per_group << "\n"
       << "alpha=" << alpha << "\n"
       << "hybrid_index=" << hybrid_index << "\n"
       << "hybrid_mode=" << to_string(hybrid_mode) << "\n"
       << "replacement_location=" << to_string(replacement_location) << "\n"
       << "block_kind=" << to_string(block_kind) << "\n"
       << "beta=" << beta << "\n"
       << "mean_shift=" << (mean_shift ? "true" : "false") << "\n";
    return os.str();
  }

  // Accepts key=value lines ('#' comments allowed) or a flat JSON object.
  // A `preset` key (latency|accuracy|toy) seeds the defaults before other keys
  // are applied. Unknown keys are rejected.
  static NetworkConfig parse(std::string_view text) {
    std::map<std::string, std::string> kv;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) throw std::invalid_argument("empty network config");
    if (text[first] == '{') {
      const auto j = nlohmann::json::parse(text);
      if (!j.is_object()) throw std::invalid_argument("network config JSON must be an object");
      for (const auto& [k, v] : j.items()) kv[k] = v.is_string() ? v.get<std::string>() : v.dump();
    } else {
      std::istringstream is{std::string(text)};
      std::string line;
      while (std::getline(is, line)) {
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        auto trim = [](std::string s) {
          const auto b = s.find_first_not_of(" \t\r");
          const auto e = s.find_last_not_of(" \t\r");
          return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("config line without '=': " + line);
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
      }
    }
    if (kv.empty()) throw std::invalid_argument("empty network config");

    NetworkConfig c;
    if (auto it = kv.find("preset"); it != kv.end()) {
      c = preset(it->second);
      kv.erase(it);
    }
    auto as_size = [](const std::string& k, const std::string& v) {
      std::size_t pos = 0;
      const long long n = std::stoll(v, &pos);
      if (pos != v.size() || n < 0) throw std::invalid_argument("bad value for " + k + ": " + v);
      return static_cast<std::size_t>(n);
    };
    auto as_real = [](const std::string& k, const std::string& v) {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("bad value for " + k + ": " + v);
      return d;
    };
    for (const auto& [k, v] : kv) {
      if (k == "scale") c.scale = as_size(k, v);
      else if (k == "feature_maps") c.feature_maps = as_size(k, v);
      else if (k == "groups") c.groups = as_size(k, v);
      else if (k == "blocks_per_group") c.blocks_per_group = as_size(k, v);
      else if (k == "alpha") c.alpha = as_real(k, v);
      else if (k == "hybrid_index") c.hybrid_index = as_size(k, v);
      else if (k == "hybrid_mode") c.hybrid_mode = parse_hybrid_mode(v);
      else if (k == "replacement_location") c.replacement_location = parse_replacement_location(v);
      else if (k == "block_kind") c.block_kind = parse_block_kind(v);
      else if (k == "beta") c.beta = as_real(k, v);
      else if (k == "mean_shift") c.mean_shift = (v == "true" || v == "1");
      else throw std::invalid_argument("unknown config key '" + k + "'");
    }
    c.validate();
    return c;
  }
};

// Which residual groups use lightweight blocks.
//   Front: the first HI groups; End: the last HI groups;
//   Mixed: HI groups spread evenly from the first to the last group.
inline std::vector<GroupKind> plan_groups(const NetworkConfig& cfg) {
  const std::size_t g = cfg.groups, hi = cfg.hybrid_index;
  if (hi > g) throw std::invalid_argument("hybrid_index exceeds group count");
  std::vector<GroupKind> plan(g, GroupKind::Standard);
  switch (cfg.hybrid_mode) {
    case HybridMode::Front:
      for (std::size_t i = 0; i < hi; ++i) plan[i] = GroupKind::Lightweight;
      break;
    case HybridMode::End:
      for (std::size_t i = g - hi; i < g; ++i) plan[i] = GroupKind::Lightweight;
      break;
    case HybridMode::Mixed: {
      const double step = hi > 1 ? static_cast<double>(g - 1) / static_cast<double>(hi - 1) : 0.0;
      for (std::size_t i = 0; i < hi; ++i) {
        auto slot = static_cast<std::size_t>(std::floor(static_cast<double>(i) * step + 0.5));
        while (slot < g && plan[slot] == GroupKind::Lightweight) ++slot;
        if (slot == g) slot = static_cast<std::size_t>(std::find(plan.begin(), plan.end(), GroupKind::Standard) - plan.begin());
        plan[slot] = GroupKind::Lightweight;
      }
      break;
    }
  }
  return plan;
}

template <typename T>
struct ResidualGroup {
  std::vector<BlockParams<T>> blocks;
  ConvWeights<T> tail;
};

// RCAN-style SR network without channel attention:
//   input layer      head conv 3→F
//   feature extract  G residual groups (blocks + tail conv + short skip),
//                    fe_tail conv + long skip from the head output
//   upsampler        log2(scale) stages of conv F→4F + pixel_shuffle(2)
//   output layer     conv F→3
template <typename T>
class Network {
public:
  Network() = default;
  explicit Network(NetworkConfig cfg) : cfg_(std::move(cfg)) { allocate(); }

  const NetworkConfig& config() const { return cfg_; }
  const std::vector<GroupKind>& plan() const { return plan_; }
  const ConvWeights<T>& head() const { return head_; }
  const std::vector<ResidualGroup<T>>& body() const { return body_; }
  const ConvWeights<T>& fe_tail() const { return fe_tail_; }
  const std::vector<ConvWeights<T>>& upsampler() const { return up_; }
  const ConvWeights<T>& output() const { return out_; }

  bool split_upsampler() const {
    return cfg_.hybrid_index > 0 && cfg_.replacement_location != ReplacementLocation::FeatureExtractionOnly;
  }
  bool split_tails() const {
    return cfg_.hybrid_index > 0 && cfg_.replacement_location == ReplacementLocation::Throughout;
  }

  // Visits every convolution in a fixed order with a stable name.
  template <typename F>
  void for_each_conv(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each_conv(F&& f) const {
    visit(*this, f);
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for_each_conv([&](const std::string&, const ConvWeights<T>& w) { n += w.param_count(); });
    return n;
  }

  template <typename Exec>
  typename Exec::Value run(Exec& ex, typename Exec::Value x) const {
    const Shape in = ex.shape(x);
    if (in.c != 3) throw DimensionError("C", "network input must have 3 channels, got " + std::to_string(in.c));
    const double a = cfg_.alpha;

    ex.stage("input");
    if (cfg_.mean_shift) x = ex.add(x, ex.constant(mean_tensor(in, T(-1))));
    auto head = ex.conv(x, head_);

    ex.stage("feature_extraction");
    auto h = head;
    for (const auto& group : body_) {
      auto g_in = h;
      for (const auto& b : group.blocks) h = run_block(ex, h, b);
      auto t = ex.conv(split_tails() ? ex.split(h, a).first : h, group.tail);
      h = ex.add(g_in, t);
    }
    auto feat = ex.add(head, ex.conv(split_tails() ? ex.split(h, a).first : h, fe_tail_));

    ex.stage("upsampler");
    auto u = feat;
    for (const auto& w : up_) u = ex.pixel_shuffle(ex.conv(split_upsampler() ? ex.split(u, a).first : u, w), 2);

    ex.stage("output");
    auto y = ex.conv(split_tails() ? ex.split(u, a).first : u, out_);
    if (cfg_.mean_shift) {
      const Shape os = ex.shape(y);
      y = ex.add(y, ex.constant(mean_tensor(os, T(1))));
    }
    return y;
  }

  Tensor<T> forward(const Tensor<T>& lr) const {
    Eval<T> ex;
    return run(ex, lr);
  }

  template <typename U>
  Network<U> cast() const {
    Network<U> o(cfg_);
    auto src = flatten();
    std::size_t i = 0;
    o.for_each_conv([&](const std::string&, ConvWeights<U>& w) { w = src[i++]->template cast<U>(); });
    return o;
  }

private:
  template <typename U>
  friend class Network;

  template <typename Self, typename F>
  static void visit(Self& self, F& f) {
    f(std::string("head"), self.head_);
    for (std::size_t g = 0; g < self.body_.size(); ++g) {
      auto& group = self.body_[g];
      for (std::size_t b = 0; b < group.blocks.size(); ++b)
        for (std::size_t k = 0; k < group.blocks[b].weights.size(); ++k)
          f("body." + std::to_string(g) + ".block." + std::to_string(b) + ".conv." + std::to_string(k),
            group.blocks[b].weights[k]);
      f("body." + std::to_string(g) + ".tail", group.tail);
    }
    f(std::string("fe_tail"), self.fe_tail_);
    for (std::size_t i = 0; i < self.up_.size(); ++i) f("upsampler." + std::to_string(i), self.up_[i]);
    f(std::string("output"), self.out_);
  }

  std::vector<const ConvWeights<T>*> flatten() const {
    std::vector<const ConvWeights<T>*> v;
    for_each_conv([&](const std::string&, const ConvWeights<T>& w) { v.push_back(&w); });
    return v;
  }

  static Tensor<T> mean_tensor(const Shape& s, T sign) {
    constexpr double mean[3] = {0.4488 * 255.0, 0.4371 * 255.0, 0.4040 * 255.0};
    Tensor<T> t(s);
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t c = 0; c < 3; ++c) std::fill_n(t.plane(n, c), s.h * s.w, sign * static_cast<T>(mean[c]));
    return t;
  }

  void allocate() {
    cfg_.validate();
    const std::size_t f = cfg_.feature_maps;
    const std::size_t fa = split_count(cfg_.alpha, f);
    using W = ConvWeights<T>;
    plan_ = plan_groups(cfg_);
    head_ = W::make(3, f, 3);
    body_.clear();
    for (std::size_t g = 0; g < cfg_.groups; ++g) {
      ResidualGroup<T> group;
      const bool light = cfg_.hybrid_index > 0 && plan_[g] == GroupKind::Lightweight;
      for (std::size_t b = 0; b < cfg_.blocks_per_group; ++b)
        group.blocks.push_back(light ? make_block<T>(cfg_.block_kind, f, cfg_.alpha, cfg_.beta)
                                     : make_block<T>(BlockKind::StandardResidual, f));
      group.tail = W::make(split_tails() ? fa : f, f, 3);
      body_.push_back(std::move(group));
    }
    fe_tail_ = W::make(split_tails() ? fa : f, f, 3);
    up_.clear();
    for (std::size_t s = cfg_.scale; s > 1; s /= 2) up_.push_back(W::make(split_upsampler() ? fa : f, 4 * f, 3));
    out_ = W::make(split_tails() ? fa : f, 3, 3);
  }

  NetworkConfig cfg_{};
  std::vector<GroupKind> plan_;
  ConvWeights<T> head_;
  std::vector<ResidualGroup<T>> body_;
  ConvWeights<T> fe_tail_;
  std::vector<ConvWeights<T>> up_;
  ConvWeights<T> out_;
};

// Uniform double in [0, 1) from the top 53 bits, independent of the
// standard library's distribution implementations.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// He-uniform kernels (bound sqrt(6 / fan_in)), zero biases.
template <typename T>
void he_uniform_init(ConvWeights<T>& w, std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(w.kernel.c() * w.kh() * w.kw());
  const double bound = std::sqrt(6.0 / fan_in);
  for (auto& v : w.kernel.data()) v = static_cast<T>((2.0 * unit_uniform(rng) - 1.0) * bound);
  std::fill(w.bias.begin(), w.bias.end(), T(0));
}

template <typename T = float>
Network<T> build(const NetworkConfig& cfg, std::uint64_t seed) {
  Network<T> net(cfg);
  std::mt19937_64 rng(seed);
  net.for_each_conv([&](const std::string&, ConvWeights<T>& w) { he_uniform_init(w, rng); });
  return net;
}

}  // namespace splitsr
