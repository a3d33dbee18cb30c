#pragma once

// Multi-class gradient-boosted decision trees (softmax objective, exact greedy
// splits), stratified splitting, evaluation metrics and a text model format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "agentfp/error.hpp"
#include "agentfp/session.hpp"

namespace agentfp {

struct DatasetRow {
  std::vector<double> features;
  ClassLabel label = ClassLabel::human;
  Task task = Task::flights;
  std::string visitor_id;
};

struct Dataset {
  std::vector<DatasetRow> rows;
  std::vector<std::string> feature_names;

  std::size_t width() const { return feature_names.size(); }

  void check() const {
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (rows[i].features.size() != feature_names.size())
        throw ModelError("row " + std::to_string(i) + " has width " + std::to_string(rows[i].features.size()) +
                         ", expected " + std::to_string(feature_names.size()));
  }

  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.feature_names = feature_names;
    out.rows.reserve(indices.size());
    for (auto i : indices) out.rows.push_back(rows[i]);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Splitting

struct SplitIndices {
  std::vector<std::size_t> train, test;
};

// Per class (in class order) the member indices are shuffled with one seeded
// generator and round(fraction * n) go to train, kept within [1, n - 1].
inline SplitIndices stratified_split(std::span<const ClassLabel> labels, double train_fraction,
                                     std::uint64_t seed) {
  std::map<ClassLabel, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  SplitIndices out;
  for (auto& [cls, idx] : by_class) {
    if (idx.size() < 2)
      throw ModelError("class '" + std::string(to_string(cls)) + "' has fewer than two rows");
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(idx.size()) + 0.5));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    out.train.insert(out.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.insert(out.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

inline std::pair<Dataset, Dataset> split_train_test(const Dataset& d, double train_fraction = 0.8,
                                                    std::uint64_t seed = 0) {
  std::vector<ClassLabel> labels;
  labels.reserve(d.rows.size());
  for (const auto& r : d.rows) labels.push_back(r.label);
  auto s = stratified_split(labels, train_fraction, seed);
  return {d.subset(s.train), d.subset(s.test)};
}

// ---------------------------------------------------------------------------
// Model

struct TrainParams {
  int rounds = 200;
  int max_depth = 6;
  double learning_rate = 0.1;
  double min_child_weight = 1.0;
  double lambda = 1.0;  // L2 penalty on leaf weights
  std::uint64_t seed = 0;
  std::map<ClassLabel, double> class_weights;  // empty: all 1
  unsigned threads = 0;                        // 0: hardware concurrency
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1, right = -1;
  double value = 0.0;

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;

  // x[feature] < threshold goes left; the -1 sentinel is an ordinary value.
  double predict(std::span<const double> x) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0)
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[i].feature)] < nodes[i].threshold
                                       ? nodes[i].left
                                       : nodes[i].right);
    return nodes[i].value;
  }

  friend bool operator==(const Tree&, const Tree&) = default;
};

struct Prediction {
  ClassLabel label = ClassLabel::human;
  std::vector<double> probs;  // aligned with EnsembleModel::classes
};

inline std::vector<double> softmax(std::span<const double> scores) {
  std::vector<double> p(scores.size());
  if (scores.empty()) return p;
  double m = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) z += (p[k] = std::exp(scores[k] - m));
  for (auto& v : p) v /= z;
  return p;
}

inline constexpr std::string_view kModelFormat = "agentfp-model";
inline constexpr int kModelVersion = 1;

class EnsembleModel {
 public:
  std::vector<ClassLabel> classes;
  std::vector<std::string> feature_names;
  double learning_rate = 0.1;
  std::vector<std::vector<Tree>> rounds;  // rounds[r][k]: tree for class k
  std::vector<double> total_gain;         // per feature

  std::size_t width() const { return feature_names.size(); }

  std::vector<double> raw_scores(std::span<const double> x) const {
    if (x.size() != width())
      throw ModelError("feature vector has width " + std::to_string(x.size()) + ", model expects " +
                       std::to_string(width()));
    std::vector<double> s(classes.size(), 0.0);
    for (const auto& r : rounds)
      for (std::size_t k = 0; k < r.size(); ++k) s[k] += r[k].predict(x);
    return s;
  }

  // Label is the argmax; ties go to the earlier class.
  Prediction predict(std::span<const double> x) const {
    auto s = raw_scores(x);
    Prediction out;
    out.probs = softmax(s);
    std::size_t best = 0;
    for (std::size_t k = 1; k < out.probs.size(); ++k)
      if (s[k] > s[best]) best = k;
    out.label = classes.at(best);
    return out;
  }

  void save(std::ostream& os) const;
  std::string serialize() const {
    std::ostringstream os;
    save(os);
    return os.str();
  }
  static EnsembleModel load(std::istream& is);
  static EnsembleModel deserialize(const std::string& text) {
    std::istringstream is(text);
    return load(is);
  }

  friend bool operator==(const EnsembleModel&, const EnsembleModel&) = default;
};

namespace detail {

inline std::string hex_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_hex_double(const std::string& s) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw ModelError("bad number '" + s + "' in model file");
  return v;
}

}  // namespace detail

// Line-oriented text; doubles are hex floats so a load/save cycle is exact.
inline void EnsembleModel::save(std::ostream& os) const {
  os << kModelFormat << ' ' << kModelVersion << '\n';
  os << "classes " << classes.size();
  for (auto c : classes) os << ' ' << to_string(c);
  os << '\n';
  os << "learning_rate " << detail::hex_double(learning_rate) << '\n';
  os << "features " << feature_names.size() << '\n';
  for (std::size_t f = 0; f < feature_names.size(); ++f)
    os << detail::hex_double(total_gain.at(f)) << ' ' << feature_names[f] << '\n';
  os << "rounds " << rounds.size() << '\n';
  for (std::size_t r = 0; r < rounds.size(); ++r) {
    for (std::size_t k = 0; k < rounds[r].size(); ++k) {
      const auto& t = rounds[r][k];
      os << "tree " << r << ' ' << k << ' ' << t.nodes.size() << '\n';
      for (const auto& n : t.nodes)
        os << n.feature << ' ' << detail::hex_double(n.threshold) << ' ' << n.left << ' ' << n.right << ' '
           << detail::hex_double(n.value) << '\n';
    }
  }
}

inline EnsembleModel EnsembleModel::load(std::istream& is) {
  EnsembleModel m;
  std::string line;
  auto next = [&](const char* what) {
    if (!std::getline(is, line)) throw ModelError(std::string("model file truncated before ") + what);
    return std::istringstream(line);
  };
  {
    auto ls = next("header");
    std::string fmt;
    int version = 0;
    ls >> fmt >> version;
    if (fmt != kModelFormat) throw ModelError("not a model file");
    if (version != kModelVersion) throw ModelError("unsupported model version " + std::to_string(version));
  }
  {
    auto ls = next("classes");
    std::string tag;
    std::size_t n = 0;
    ls >> tag >> n;
    if (tag != "classes") throw ModelError("expected classes line");
    for (std::size_t i = 0; i < n; ++i) {
      std::string name;
      ls >> name;
      auto c = class_from_string(name);
      if (!c) throw ModelError("unknown class '" + name + "' in model file");
      m.classes.push_back(*c);
    }
  }
  {
    auto ls = next("learning_rate");
    std::string tag, v;
    ls >> tag >> v;
    m.learning_rate = detail::parse_hex_double(v);
  }
  std::size_t nf = 0;
  {
    auto ls = next("features");
    std::string tag;
    ls >> tag >> nf;
    if (tag != "features") throw ModelError("expected features line");
  }
  for (std::size_t f = 0; f < nf; ++f) {
    if (!std::getline(is, line)) throw ModelError("model file truncated in feature list");
    auto sp = line.find(' ');
    if (sp == std::string::npos) throw ModelError("bad feature line");
    m.total_gain.push_back(detail::parse_hex_double(line.substr(0, sp)));
    m.feature_names.push_back(line.substr(sp + 1));
  }
  std::size_t nr = 0;
  {
    auto ls = next("rounds");
    std::string tag;
    ls >> tag >> nr;
    if (tag != "rounds") throw ModelError("expected rounds line");
  }
  m.rounds.resize(nr);
  for (std::size_t r = 0; r < nr; ++r) {
    for (std::size_t k = 0; k < m.classes.size(); ++k) {
      auto ls = next("tree");
      std::string tag;
      std::size_t rr = 0, kk = 0, nn = 0;
      ls >> tag >> rr >> kk >> nn;
      if (tag != "tree" || rr != r || kk != k) throw ModelError("tree out of order in model file");
      Tree t;
      for (std::size_t i = 0; i < nn; ++i) {
        auto ns = next("tree node");
        TreeNode n;
        std::string thr, val;
        ns >> n.feature >> thr >> n.left >> n.right >> val;
        n.threshold = detail::parse_hex_double(thr);
        n.value = detail::parse_hex_double(val);
        if (n.feature >= static_cast<int>(nf)) throw ModelError("split feature out of range");
        t.nodes.push_back(n);
      }
      m.rounds[r].push_back(std::move(t));
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Training

namespace detail {

struct SplitCandidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
  double g_left = 0.0, h_left = 0.0;
};

inline double leaf_score(double g, double h, double lambda) { return g * g / (h + lambda); }

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<std::vector<double>>& cols, const std::vector<std::vector<std::uint32_t>>& sorted,
              const TrainParams& p, unsigned threads)
      : cols_(cols), sorted_(sorted), p_(p), threads_(threads) {}

  // Grows one tree level by level; fills leaf_of[i] with the leaf reached by row i.
  Tree build(const std::vector<double>& g, const std::vector<double>& h, std::vector<double>& gain_acc,
             std::vector<int>& leaf_of) {
    const std::size_t n = g.size();
    Tree tree;
    std::vector<int> pos(n, 0);
    tree.nodes.push_back({});
    std::vector<double> node_g{std::accumulate(g.begin(), g.end(), 0.0)};
    std::vector<double> node_h{std::accumulate(h.begin(), h.end(), 0.0)};
    std::vector<int> frontier{0};

    for (int depth = 0; depth < p_.max_depth && !frontier.empty(); ++depth) {
      std::vector<int> slot_of(tree.nodes.size(), -1);
      for (std::size_t s = 0; s < frontier.size(); ++s) slot_of[static_cast<std::size_t>(frontier[s])] = static_cast<int>(s);
      auto best = find_splits(g, h, pos, slot_of, frontier, node_g, node_h);

      std::vector<int> next;
      for (std::size_t s = 0; s < frontier.size(); ++s) {
        const auto& b = best[s];
        if (b.feature < 0) continue;
        const int id = frontier[s];
        const int l = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        tree.nodes.push_back({});
        auto& node = tree.nodes[static_cast<std::size_t>(id)];
        node.feature = b.feature;
        node.threshold = b.threshold;
        node.left = l;
        node.right = l + 1;
        gain_acc[static_cast<std::size_t>(b.feature)] += b.gain;
        node_g.push_back(b.g_left);
        node_h.push_back(b.h_left);
        node_g.push_back(node_g[static_cast<std::size_t>(id)] - b.g_left);
        node_h.push_back(node_h[static_cast<std::size_t>(id)] - b.h_left);
        next.push_back(l);
        next.push_back(l + 1);
      }
      if (next.empty()) break;
      for (std::size_t i = 0; i < n; ++i) {
        const auto& node = tree.nodes[static_cast<std::size_t>(pos[i])];
        if (node.feature < 0) continue;
        pos[i] = cols_[static_cast<std::size_t>(node.feature)][i] < node.threshold ? node.left : node.right;
      }
      frontier = std::move(next);
    }
    for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
      auto& node = tree.nodes[id];
      if (node.feature < 0) node.value = -node_g[id] / (node_h[id] + p_.lambda) * p_.learning_rate;
    }
    leaf_of = std::move(pos);
    return tree;
  }

 private:
  std::vector<SplitCandidate> find_splits(const std::vector<double>& g, const std::vector<double>& h,
                                          const std::vector<int>& pos, const std::vector<int>& slot_of,
                                          const std::vector<int>& frontier, const std::vector<double>& node_g,
                                          const std::vector<double>& node_h) const {
    const std::size_t nf = cols_.size(), ns = frontier.size();
    const unsigned workers = std::max(1u, std::min<unsigned>(threads_, static_cast<unsigned>(nf)));
    std::vector<std::vector<SplitCandidate>> per_worker(workers, std::vector<SplitCandidate>(ns));

    auto scan = [&](unsigned w) {
      auto& best = per_worker[w];
      std::vector<double> gl(ns), hl(ns), last(ns);
      std::vector<char> seen(ns);
      for (std::size_t f = w; f < nf; f += workers) {
        std::fill(gl.begin(), gl.end(), 0.0);
        std::fill(hl.begin(), hl.end(), 0.0);
        std::fill(seen.begin(), seen.end(), 0);
        const auto& col = cols_[f];
        for (auto row : sorted_[f]) {
          const int s = slot_of[static_cast<std::size_t>(pos[row])];
          if (s < 0) continue;
          const auto si = static_cast<std::size_t>(s);
          const double v = col[row];
          if (seen[si] && v != last[si]) {
            const double G = node_g[static_cast<std::size_t>(frontier[si])];
            const double H = node_h[static_cast<std::size_t>(frontier[si])];
            const double hr = H - hl[si];
            if (hl[si] >= p_.min_child_weight && hr >= p_.min_child_weight) {
              const double gain = leaf_score(gl[si], hl[si], p_.lambda) + leaf_score(G - gl[si], hr, p_.lambda) -
                                  leaf_score(G, H, p_.lambda);
              auto& b = best[si];
              if (gain > b.gain) {
                double thr = 0.5 * (last[si] + v);
                if (!(thr > last[si]) || !(thr <= v)) thr = v;
                b = {gain, static_cast<int>(f), thr, gl[si], hl[si]};
              }
            }
          }
          gl[si] += g[row];
          hl[si] += h[row];
          last[si] = v;
          seen[si] = 1;
        }
      }
    };
    if (workers == 1) {
      scan(0);
    } else {
      std::vector<std::thread> pool;
      for (unsigned w = 0; w < workers; ++w) pool.emplace_back(scan, w);
      for (auto& t : pool) t.join();
    }
    // Merge: highest gain, ties to the lower feature index.
    std::vector<SplitCandidate> best(ns);
    for (std::size_t s = 0; s < ns; ++s) {
      for (const auto& pw : per_worker) {
        const auto& c = pw[s];
        if (c.feature < 0) continue;
        if (best[s].feature < 0 || c.gain > best[s].gain ||
            (c.gain == best[s].gain && c.feature < best[s].feature))
          best[s] = c;
      }
      if (best[s].gain <= kMinSplitGain) best[s] = {};
    }
    return best;
  }

  static constexpr double kMinSplitGain = 1e-6;

  const std::vector<std::vector<double>>& cols_;
  const std::vector<std::vector<std::uint32_t>>& sorted_;
  const TrainParams& p_;
  unsigned threads_;
};

}  // namespace detail

inline EnsembleModel train(const Dataset& train_set, const TrainParams& params = {}) {
  train_set.check();
  const std::size_t n = train_set.rows.size(), nf = train_set.width();
  EnsembleModel m;
  m.feature_names = train_set.feature_names;
  m.learning_rate = params.learning_rate;
  m.total_gain.assign(nf, 0.0);

  std::set<ClassLabel> present;
  for (const auto& r : train_set.rows) present.insert(r.label);
  if (present.size() < 2) throw ModelError("training needs at least two classes");
  m.classes.assign(present.begin(), present.end());
  const std::size_t nk = m.classes.size();

  std::vector<std::vector<double>> cols(nf, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t f = 0; f < nf; ++f) {
      const double v = train_set.rows[i].features[f];
      if (!std::isfinite(v))
        throw ModelError("non-finite value in row " + std::to_string(i) + ", feature '" + train_set.feature_names[f] + "'");
      cols[f][i] = v;
    }
  std::vector<std::vector<std::uint32_t>> sorted(nf, std::vector<std::uint32_t>(n));
  for (std::size_t f = 0; f < nf; ++f) {
    std::iota(sorted[f].begin(), sorted[f].end(), 0u);
    std::stable_sort(sorted[f].begin(), sorted[f].end(),
                     [&](std::uint32_t a, std::uint32_t b) { return cols[f][a] < cols[f][b]; });
  }

  std::vector<std::size_t> y(n);
  std::vector<double> weight(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto lbl = train_set.rows[i].label;
    y[i] = static_cast<std::size_t>(std::find(m.classes.begin(), m.classes.end(), lbl) - m.classes.begin());
    if (auto it = params.class_weights.find(lbl); it != params.class_weights.end()) weight[i] = it->second;
  }

  unsigned threads = params.threads ? params.threads : std::max(1u, std::thread::hardware_concurrency());
  // Thread start-up dominates on narrow data.
  if (n * nf < 20000) threads = 1;
  detail::TreeBuilder builder(cols, sorted, params, threads);
  std::vector<std::vector<double>> scores(n, std::vector<double>(nk, 0.0));
  std::vector<double> g(n), h(n);
  std::vector<int> leaf_of;
  for (int r = 0; r < params.rounds; ++r) {
    std::vector<std::vector<double>> probs(n);
    for (std::size_t i = 0; i < n; ++i) probs[i] = softmax(scores[i]);
    std::vector<Tree> round;
    round.reserve(nk);
    for (std::size_t k = 0; k < nk; ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        const double p = probs[i][k];
        g[i] = (p - (y[i] == k ? 1.0 : 0.0)) * weight[i];
        h[i] = std::max(p * (1.0 - p), 1e-16) * weight[i];
      }
      round.push_back(builder.build(g, h, m.total_gain, leaf_of));
      const auto& t = round.back();
      for (std::size_t i = 0; i < n; ++i) scores[i][k] += t.nodes[static_cast<std::size_t>(leaf_of[i])].value;
    }
    m.rounds.push_back(std::move(round));
  }
  return m;
}

inline Prediction predict(const EnsembleModel& m, std::span<const double> x) { return m.predict(x); }

// ---------------------------------------------------------------------------
// Evaluation

struct ClassMetrics {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::size_t support = 0;
};

struct EvalReport {
  std::vector<ClassLabel> classes;                   // confusion index order
  std::vector<std::vector<std::size_t>> confusion;   // [true][predicted]
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
  std::vector<ClassLabel> predictions;               // one per test row
};

// Classes are those present in the truth or the predictions, in enum order.
// Per-class 0/0 ratios count as 0; macro values are unweighted class means.
inline EvalReport evaluate_predictions(std::span<const ClassLabel> truth, std::span<const ClassLabel> predicted) {
  EvalReport rep;
  std::set<ClassLabel> cls(truth.begin(), truth.end());
  cls.insert(predicted.begin(), predicted.end());
  rep.classes.assign(cls.begin(), cls.end());
  const std::size_t k = rep.classes.size();
  auto index = [&](ClassLabel c) {
    return static_cast<std::size_t>(std::find(rep.classes.begin(), rep.classes.end(), c) - rep.classes.begin());
  };
  rep.confusion.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) ++rep.confusion[index(truth[i])][index(predicted[i])];
  rep.per_class.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t tp = rep.confusion[c][c], row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += rep.confusion[c][j];
      col += rep.confusion[j][c];
    }
    auto& mc = rep.per_class[c];
    mc.support = row;
    mc.precision = col ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    mc.recall = row ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
    mc.f1 = mc.precision + mc.recall > 0.0 ? 2.0 * mc.precision * mc.recall / (mc.precision + mc.recall) : 0.0;
    rep.macro_precision += mc.precision;
    rep.macro_recall += mc.recall;
    rep.macro_f1 += mc.f1;
  }
  if (k) {
    rep.macro_precision /= static_cast<double>(k);
    rep.macro_recall /= static_cast<double>(k);
    rep.macro_f1 /= static_cast<double>(k);
  }
  rep.predictions.assign(predicted.begin(), predicted.end());
  return rep;
}

inline EvalReport evaluate(const EnsembleModel& m, const Dataset& test) {
  if (test.rows.empty()) throw ModelError("cannot evaluate on an empty test set");
  std::vector<ClassLabel> truth, pred;
  for (const auto& r : test.rows) {
    truth.push_back(r.label);
    pred.push_back(m.predict(r.features).label);
  }
  return evaluate_predictions(truth, pred);
}

inline std::vector<std::pair<std::string, double>> feature_importance(const EnsembleModel& m) {
  std::vector<std::size_t> idx;
  for (std::size_t f = 0; f < m.total_gain.size(); ++f)
    if (m.total_gain[f] > 0.0) idx.push_back(f);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return m.total_gain[a] > m.total_gain[b]; });
  std::vector<std::pair<std::string, double>> out;
  for (auto f : idx) out.emplace_back(m.feature_names[f], m.total_gain[f]);
  return out;
}

}  // namespace agentfp
