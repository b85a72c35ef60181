/*
 * Copyright 2026 The freda Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "freda/protocol/engine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "freda/digest.hpp"
#include "freda/privacy.hpp"
#include "freda/protocol/transport.hpp"
#include "freda/rng.hpp"

namespace freda::protocol {

double confidence(double z) {
  const double a = std::abs(z);
  if (std::isinf(a)) return 0.0;
  return std::erfc(a / std::sqrt(2.0));
}

double sample_confidence(double residual, double sd) {
  if (sd > 0) return confidence(residual / sd);
  return residual == 0.0 ? 1.0 : 0.0;
}

double feature_weight(double c, double k) {
  require(c >= 0 && c <= 1, ErrorCode::kInvalidArgument, "feature_weight: c outside [0, 1]");
  require(k >= 0, ErrorCode::kInvalidArgument, "feature_weight: k must be >= 0");
  return std::pow(1.0 - c, k);
}

std::vector<DomainWeights> domain_weights(const MatrixXd& x_target,
                                          const std::vector<int>& domain_ids,
                                          const MatrixXd& means, const MatrixXd& variances,
                                          double k) {
  require(x_target.rows() == means.rows() && x_target.cols() == means.cols() &&
              variances.rows() == means.rows() && variances.cols() == means.cols() &&
              static_cast<Index>(domain_ids.size()) == x_target.rows(),
          ErrorCode::kShapeMismatch, "domain_weights: shape mismatch");
  const Index p = x_target.cols();
  int n_domains = 0;
  for (int d : domain_ids) n_domains = std::max(n_domains, d + 1);
  std::vector<DomainWeights> out(static_cast<std::size_t>(n_domains));
  std::vector<Index> counts(static_cast<std::size_t>(n_domains), 0);
  for (int d = 0; d < n_domains; ++d) {
    auto& w = out[static_cast<std::size_t>(d)];
    w.domain = d;
    w.k = k;
    w.confidence = VectorXd::Zero(p);
  }
  for (Index m = 0; m < x_target.rows(); ++m) {
    const int d = domain_ids[static_cast<std::size_t>(m)];
    auto& w = out[static_cast<std::size_t>(d)];
    ++counts[static_cast<std::size_t>(d)];
    for (Index f = 0; f < p; ++f) {
      const double sd = std::sqrt(std::max(variances(m, f), 0.0));
      if (!(sd > 0)) ++w.zero_sd_events;
      w.confidence(f) += sample_confidence(std::abs(x_target(m, f) - means(m, f)), sd);
    }
  }
  for (int d = 0; d < n_domains; ++d) {
    auto& w = out[static_cast<std::size_t>(d)];
    const auto n = counts[static_cast<std::size_t>(d)];
    if (n > 0) w.confidence /= static_cast<double>(n);
    w.confidence = w.confidence.cwiseMin(1.0).cwiseMax(0.0);
    w.weight = w.confidence.unaryExpr([k](double c) { return feature_weight(c, k); });
  }
  return out;
}

double SimilarityModel::predict(double similarity) const {
  const double v = slope * similarity + intercept;
  return log_space ? std::exp(v) : v;
}

SimilarityModel fit_similarity_model(const std::vector<double>& similarity,
                                     const std::vector<double>& lambda, bool log_space) {
  require(!similarity.empty() && similarity.size() == lambda.size(),
          ErrorCode::kInvalidArgument, "fit_similarity_model: need matching, non-empty inputs");
  SimilarityModel m;
  m.log_space = log_space;
  const std::size_t n = similarity.size();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    require(!log_space || lambda[i] > 0, ErrorCode::kInvalidArgument,
            "fit_similarity_model: lambda must be > 0 in log space");
    y[i] = log_space ? std::log(lambda[i]) : lambda[i];
  }
  const double mx = std::accumulate(similarity.begin(), similarity.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (similarity[i] - mx) * (similarity[i] - mx);
    sxy += (similarity[i] - mx) * (y[i] - my);
  }
  if (n < 2 || !(sxx > 0)) {
    m.degenerate = true;
    m.slope = 0;
    m.intercept = my;
  } else {
    m.slope = sxy / sxx;
    m.intercept = my - m.slope * mx;
  }
  for (std::size_t i = 0; i < n; ++i)
    m.residuals.push_back(y[i] - (m.slope * similarity[i] + m.intercept));
  return m;
}

std::size_t select_lambda(const std::vector<double>& maes) {
  require(!maes.empty(), ErrorCode::kInvalidArgument, "select_lambda: empty");
  std::size_t best = 0;
  for (std::size_t i = 1; i < maes.size(); ++i)
    if (maes[i] < maes[best]) best = i;
  return best;
}

std::uint64_t sub_seed(std::uint64_t master, const std::string& name, std::uint64_t index) {
  return derive_seed(master, name, index);
}

ProtocolInputs build_inputs(const RunConfig& cfg) {
  ProtocolInputs in;
  if (cfg.mode == "synthetic") {
    data::SyntheticConfig s = cfg.synthetic;
    s.n_clients = cfg.protocol.n_source_clients;
    s.seed = sub_seed(cfg.seed, "data");
    auto syn = data::gen_synthetic(s);
    in.sources = std::move(syn.source_shards);
    in.target = std::move(syn.target);
    in.similarities = std::move(syn.similarities);
    return in;
  }
  const data::Dataset pooled = data::read_csv(cfg.files.source);
  require(pooled.has_labels(), ErrorCode::kConfig, "files.source: labels are required");
  in.sources = data::partition_uniform(pooled, cfg.protocol.n_source_clients,
                                       sub_seed(cfg.seed, "partition"));
  in.target = data::read_csv(cfg.files.target);
  require(in.target.has_labels(), ErrorCode::kConfig,
          "files.target: labels are required for calibration and scoring");
  require(in.target.feature_names == pooled.feature_names, ErrorCode::kConfig,
          "files.target: feature columns differ from files.source");
  std::ifstream sims(cfg.files.similarities);
  require(static_cast<bool>(sims), ErrorCode::kIo,
          "files.similarities: cannot open " + cfg.files.similarities);
  std::string line;
  std::getline(sims, line);  // header
  std::map<int, double> by_domain;
  while (std::getline(sims, line)) {
    if (line.empty() || line == "\r") continue;
    const auto comma = line.find(',');
    require(comma != std::string::npos, ErrorCode::kIo,
            "files.similarities: expected domain_id,similarity");
    by_domain[std::stoi(line.substr(0, comma))] = std::stod(line.substr(comma + 1));
  }
  for (int d = 0; d < in.target.domain_count(); ++d) {
    require(by_domain.count(d), ErrorCode::kConfig,
            "files.similarities: missing domain " + std::to_string(d));
    in.similarities.push_back(by_domain[d]);
  }
  return in;
}

namespace {

using privacy::MaskedMatrix;

enum class StepKind {
  kSeeds,
  kStats,
  kPooled,
  kHp,
  kMasked,
  kEncode,
  kMeanShare,
  kWeights,
  kGrid,
  kGlobal,
  kLocal,
  kModels,
  kLambdaPred,
  kFinalSetup,
  kFinalModels,
  kResults,
};

struct Step {
  StepKind kind;
  Phase phase;
  int stage = 0;  // 3: lambda search, 4: final training
  int round = 0;
};

constexpr std::uint64_t kNonceStats = 1;
constexpr std::uint64_t kNonceHp = 2;
constexpr std::uint64_t kNonceXty = 3;
std::uint64_t coef_nonce(int stage, int round) {
  return (static_cast<std::uint64_t>(stage) << 32) | static_cast<std::uint64_t>(round);
}

struct Shared {
  const RunConfig& cfg;
  int n_sources;
  Index p_raw;
  std::vector<int> source_ids;
};

class Outbox {
 public:
  Outbox(PartyId self, Transport& transport, Transcript& transcript, const RunOptions& opt)
      : self_(self), transport_(transport), transcript_(transcript), opt_(opt) {}

  void set_phase(Phase p) { phase_ = p; }
  void send(const PartyId& to, const std::string& kind, Tensor payload) {
    Message m;
    m.seq = seq_++;
    m.phase = phase_;
    m.sender = self_;
    m.receiver = to;
    m.kind = kind;
    m.payload = std::move(payload);
    if (opt_.tamper) opt_.tamper(m);
    transcript_.record(m);
    transport_.send(m);
  }

 private:
  PartyId self_;
  Transport& transport_;
  Transcript& transcript_;
  const RunOptions& opt_;
  Phase phase_ = Phase::kSetup;
  std::uint64_t seq_ = 0;
};

std::vector<Message> take(const std::vector<Message>& inbox, const std::string& kind) {
  std::vector<Message> out;
  for (const auto& m : inbox)
    if (m.kind == kind) out.push_back(m);
  return out;
}

const Message& take_one(const std::vector<Message>& inbox, const std::string& kind) {
  const Message* found = nullptr;
  for (const auto& m : inbox) {
    if (m.kind != kind) continue;
    require(found == nullptr, ErrorCode::kProtocol, "expected one '" + kind + "' message");
    found = &m;
  }
  require(found != nullptr, ErrorCode::kProtocol, "missing '" + kind + "' message");
  return *found;
}

// Pooled statistics layout: [count, sum(P), sum_sq(P), label_sum, label_sum_sq].
struct Pooled {
  data::FeatureStats features;
  data::FeatureStats labels;
  std::vector<Index> dropped;
};

Pooled unpack_pooled(const VectorXd& v, Index p) {
  require(v.size() == 2 * p + 3, ErrorCode::kProtocol, "pooled stats: bad length");
  Pooled out;
  const auto count = static_cast<std::int64_t>(std::llround(v(0)));
  out.features.count = count;
  out.features.sum = v.segment(1, p);
  out.features.sum_sq = v.segment(1 + p, p);
  out.labels.count = count;
  out.labels.sum = v.segment(1 + 2 * p, 1);
  out.labels.sum_sq = v.segment(2 + 2 * p, 1);
  out.dropped = data::zero_variance_columns(out.features);
  return out;
}

std::vector<Index> others(Index p, Index f) {
  std::vector<Index> cols;
  for (Index j = 0; j < p; ++j)
    if (j != f) cols.push_back(j);
  return cols;
}

// The P x d map applied by data holders for feature f.
MatrixXd feature_transform(std::uint64_t mask_seed, Index p, Index f, Index d) {
  const auto basis = privacy::gen_mask_basis(
      derive_seed(mask_seed, "feature", static_cast<std::uint64_t>(f)), p - 1, d);
  return privacy::masking_transform(basis);
}

// Rows of a batched federated training: one (lambda, weights) per row.
struct Batch {
  std::vector<int> domain;
  VectorXd lambdas;
  MatrixXd weights;
};

// weights payload rows: [domain_id, is_t1, w_1..w_P]
std::map<int, VectorXd> weights_by_domain(const MatrixXd& table) {
  std::map<int, VectorXd> out;
  for (Index r = 0; r < table.rows(); ++r)
    out[static_cast<int>(table(r, 0))] = table.row(r).tail(table.cols() - 2).transpose();
  return out;
}

Batch grid_batch(const MatrixXd& weight_table, const MatrixXd& grids) {
  Batch b;
  std::vector<Index> t1_rows;
  for (Index r = 0; r < weight_table.rows(); ++r)
    if (weight_table(r, 1) != 0.0) t1_rows.push_back(r);
  require(static_cast<Index>(t1_rows.size()) == grids.rows(), ErrorCode::kProtocol,
          "lambda grid rows do not match calibration domains");
  const Index p = weight_table.cols() - 2;
  const Index g = grids.cols();
  b.lambdas.resize(grids.rows() * g);
  b.weights.resize(grids.rows() * g, p);
  Index row = 0;
  for (std::size_t i = 0; i < t1_rows.size(); ++i) {
    for (Index j = 0; j < g; ++j, ++row) {
      b.domain.push_back(static_cast<int>(weight_table(t1_rows[i], 0)));
      b.lambdas(row) = grids(static_cast<Index>(i), j);
      b.weights.row(row) = weight_table.row(t1_rows[i]).tail(p);
    }
  }
  return b;
}

Batch final_batch(const MatrixXd& weight_table, const MatrixXd& lambda_pred) {
  const auto w = weights_by_domain(weight_table);
  const Index p = weight_table.cols() - 2;
  Batch b;
  b.lambdas.resize(lambda_pred.rows());
  b.weights.resize(lambda_pred.rows(), p);
  for (Index r = 0; r < lambda_pred.rows(); ++r) {
    const int d = static_cast<int>(lambda_pred(r, 0));
    auto it = w.find(d);
    require(it != w.end(), ErrorCode::kProtocol, "lambda_pred: unknown domain");
    b.domain.push_back(d);
    b.lambdas(r) = lambda_pred(r, 1);
    b.weights.row(r) = it->second.transpose();
  }
  return b;
}

wen::Config<double> schedule(const RunConfig& cfg) {
  wen::Config<double> s;
  s.alpha = cfg.wen.alpha;
  s.rounds = cfg.wen.rounds;
  s.epochs = cfg.wen.epochs;
  s.eta0 = cfg.wen.eta0;
  s.eta_final = cfg.wen.eta_final;
  return s;
}

class Party {
 public:
  explicit Party(PartyId id) : id_(id) {}
  virtual ~Party() = default;
  const PartyId& id() const { return id_; }
  // Returns false when the step does not concern this party; its inbox is
  // then carried over to the next step.
  virtual bool act(const Step& step, const std::vector<Message>& inbox, Outbox& out) = 0;

 protected:
  PartyId id_;
};

// ---------------------------------------------------------------- source

class SourceParty final : public Party {
 public:
  SourceParty(const Shared& shared, int index, data::Dataset shard)
      : Party(PartyId::source(static_cast<std::uint32_t>(index))),
        sh_(shared),
        index_(index),
        raw_(std::move(shard)),
        seed_(sub_seed(shared.cfg.seed, "party-source", static_cast<std::uint64_t>(index))) {}

  bool act(const Step& step, const std::vector<Message>& inbox, Outbox& out) override {
    switch (step.kind) {
      case StepKind::kSeeds:
        send_seeds(out);
        break;
      case StepKind::kStats:
        read_seeds(inbox);
        send_stats(out);
        break;
      case StepKind::kHp:
        read_pooled(inbox);
        send_hyperparams(out);
        break;
      case StepKind::kMasked:
        send_masked(out);
        break;
      case StepKind::kMeanShare:
        send_mean_shares(inbox, out);
        break;
      case StepKind::kWeights:
        send_xty(out);
        break;
      case StepKind::kLocal:
        local_round(step, inbox, out);
        break;
      default:
        return false;
    }
    return true;
  }

 private:
  std::string zs_label() const { return "zero-sum"; }

  void send_seeds(Outbox& out) {
    if (index_ == 0) {
      mask_seed_ = derive_seed(seed_, "flake-mask");
      for (int j = 1; j < sh_.n_sources; ++j)
        out.send(PartyId::source(static_cast<std::uint32_t>(j)), "mask_seed", seed_tensor(*mask_seed_));
      out.send(PartyId::target(), "mask_seed", seed_tensor(*mask_seed_));
    }
    for (int j = index_ + 1; j < sh_.n_sources; ++j) {
      const auto s = derive_seed(seed_, "pair", static_cast<std::uint64_t>(j));
      pair_seeds_[{index_, j}] = s;
      out.send(PartyId::source(static_cast<std::uint32_t>(j)), "pair_seed", seed_tensor(s));
    }
  }

  void read_seeds(const std::vector<Message>& inbox) {
    for (const auto& m : take(inbox, "pair_seed")) {
      const int other = static_cast<int>(m.sender.index);
      pair_seeds_[{other, index_}] = tensor_seed(m.payload);
    }
    if (index_ != 0) mask_seed_ = tensor_seed(take_one(inbox, "mask_seed").payload);
    require(static_cast<int>(pair_seeds_.size()) == sh_.n_sources - 1, ErrorCode::kProtocol,
            id_.str() + ": incomplete pairwise seeds");
  }

  MatrixXd masked(const MatrixXd& value, std::uint64_t nonce) const {
    return value + privacy::zero_sum_mask(index_, sh_.source_ids, pair_seeds_, value.rows(),
                                          value.cols(), nonce);
  }

  VectorXd transformed_labels() const {
    if (sh_.cfg.label_transform == "age")
      return data::age_transform(*raw_.labels, {sh_.cfg.y_adult});
    return *raw_.labels;
  }

  void send_stats(Outbox& out) {
    const auto fs = data::local_stats(raw_.features);
    const auto ls = data::local_stats(transformed_labels());
    const Index p = raw_.cols();
    VectorXd v(2 * p + 3);
    v(0) = static_cast<double>(fs.count);
    v.segment(1, p) = fs.sum;
    v.segment(1 + p, p) = fs.sum_sq;
    v(1 + 2 * p) = ls.sum(0);
    v(2 + 2 * p) = ls.sum_sq(0);
    out.send(PartyId::aggregator(), "stats_share", Tensor::vector(VectorXd(masked(v, kNonceStats))));
  }

  void read_pooled(const std::vector<Message>& inbox) {
    pooled_ = unpack_pooled(take_one(inbox, "pooled_stats").payload.as_vector(), raw_.cols());
    const data::Dataset kept = data::drop_columns(raw_, pooled_.dropped);
    const auto stats = data::drop_stat_columns(pooled_.features, pooled_.dropped);
    x_ = data::standardize(kept, stats).features;
    y_ = data::standardize_values(transformed_labels(), pooled_.labels);
    share_ = static_cast<double>(x_.rows()) / static_cast<double>(pooled_.features.count);
  }

  void send_hyperparams(Outbox& out) {
    const Index p = x_.cols();
    VectorXd v(3 * p);
    const auto bounds = sh_.cfg.bounds();
    for (Index f = 0; f < p; ++f) {
      const auto cols = others(p, f);
      const MatrixXd xf = x_(Eigen::all, cols);
      const VectorXd yf = x_.col(f);
      gpr::HyperParams<double> hp;
      double failed = 0;
      try {
        hp = sh_.cfg.gpr.fixed()
                 ? gpr::HyperParams<double>{sh_.cfg.gpr.fixed_sigma_p2, sh_.cfg.gpr.fixed_sigma_n2}
                 : gpr::optimize_hyperparams(xf, yf, bounds, gpr::HyperParams<double>{});
      } catch (const Error& e) {
        spdlog::warn("{}: hyper-parameter search failed for feature {}: {}", id_.str(), f, e.what());
        failed = 1;
      }
      const double scale = sh_.cfg.protocol.hp_weighted ? share_ : 1.0;
      v(f) = scale * hp.sigma_p2;
      v(p + f) = scale * hp.sigma_n2;
      v(2 * p + f) = failed;
    }
    out.send(PartyId::aggregator(), "hp_share", Tensor::vector(VectorXd(masked(v, kNonceHp))));
  }

  void send_masked(Outbox& out) {
    const Index p = x_.cols();
    const Index d = sh_.cfg.lifted_dim(p);
    for (Index f = 0; f < p; ++f) {
      const MatrixXd t = feature_transform(*mask_seed_, p, f, d);
      const MatrixXd xf = x_(Eigen::all, others(p, f));
      out.send(PartyId::aggregator(), "masked_data", Tensor::matrix(xf * t));
    }
  }

  void send_mean_shares(const std::vector<Message>& inbox, Outbox& out) {
    const auto blocks = take(inbox, "encoded_block");
    require(static_cast<Index>(blocks.size()) == x_.cols(), ErrorCode::kProtocol,
            id_.str() + ": expected one encoded block per feature");
    for (Index f = 0; f < x_.cols(); ++f) {
      const MatrixXd block = blocks[static_cast<std::size_t>(f)].payload.as_matrix();
      require(block.cols() == x_.rows(), ErrorCode::kProtocol, "encoded block width mismatch");
      out.send(PartyId::target(), "mean_share", Tensor::vector(VectorXd(block * x_.col(f))));
    }
  }

  void send_xty(Outbox& out) {
    VectorXd xty(x_.cols());
    for (Index f = 0; f < x_.cols(); ++f) xty(f) = x_.col(f).dot(y_);
    out.send(PartyId::aggregator(), "xty_share", Tensor::vector(VectorXd(masked(xty, kNonceXty))));
  }

  void local_round(const Step& step, const std::vector<Message>& inbox, Outbox& out) {
    for (const auto& m : take(inbox, "weights")) weight_table_ = m.payload.as_matrix();
    if (step.round == 0) {
      if (step.stage == 3) {
        batch_ = grid_batch(weight_table_, take_one(inbox, "lambda_grid").payload.as_matrix());
      } else {
        batch_ = final_batch(weight_table_, take_one(inbox, "lambda_pred").payload.as_matrix());
      }
    }
    MatrixXd local = take_one(inbox, "global_coef").payload.as_matrix();
    const auto sched = schedule(sh_.cfg);
    const double eta = wen::lr_schedule(step.round, sched.rounds, sched.eta0, sched.eta_final);
    wen::local_update_batch<double>(local, x_, y_, batch_.lambdas, batch_.weights, sched.alpha,
                                    sched.epochs, eta, 1.0 / share_);
    const MatrixXd contribution = share_ * local;
    out.send(PartyId::aggregator(), "coef_share",
             Tensor::matrix(masked(contribution, coef_nonce(step.stage, step.round))));
  }

  const Shared& sh_;
  int index_;
  data::Dataset raw_;
  std::uint64_t seed_;
  std::optional<std::uint64_t> mask_seed_;
  privacy::PairSeeds pair_seeds_;
  Pooled pooled_;
  MatrixXd x_;
  VectorXd y_;
  double share_ = 0;
  MatrixXd weight_table_;
  Batch batch_;
};

// ------------------------------------------------------------ aggregator

class AggregatorParty final : public Party {
 public:
  explicit AggregatorParty(const Shared& shared)
      : Party(PartyId::aggregator()),
        sh_(shared),
        seed_(sub_seed(shared.cfg.seed, "party-aggregator")) {}

  bool act(const Step& step, const std::vector<Message>& inbox, Outbox& out) override {
    switch (step.kind) {
      case StepKind::kPooled:
        pool_stats(inbox, out);
        break;
      case StepKind::kMasked:
        average_hyperparams(inbox);
        break;
      case StepKind::kEncode:
        encode(inbox, out);
        break;
      case StepKind::kGrid:
        make_grids(inbox, out);
        break;
      case StepKind::kGlobal:
        global_round(step, inbox, out);
        break;
      case StepKind::kModels:
        finish_training(inbox, out, "models");
        break;
      case StepKind::kFinalSetup:
        lambda_pred_ = take_one(inbox, "lambda_pred").payload.as_matrix();
        break;
      case StepKind::kFinalModels:
        finish_training(inbox, out, "final_models");
        break;
      default:
        return false;
    }
    return true;
  }

  const std::vector<gpr::HyperParams<double>>& hyperparams() const { return hp_; }
  std::int64_t hp_fallbacks() const { return hp_fallbacks_; }
  Index p() const { return p_; }

 private:
  VectorXd sum_vectors(const std::vector<Message>& parts) const {
    require(static_cast<int>(parts.size()) == sh_.n_sources, ErrorCode::kProtocol,
            "aggregator: expected one share per source");
    std::vector<MatrixXd> values;
    for (const auto& m : parts) values.push_back(m.payload.as_vector());
    return privacy::secure_sum(values);
  }

  void pool_stats(const std::vector<Message>& inbox, Outbox& out) {
    VectorXd total = sum_vectors(take(inbox, "stats_share"));
    total(0) = std::round(total(0));
    pooled_ = unpack_pooled(total, sh_.p_raw);
    if (!pooled_.dropped.empty())
      spdlog::warn("dropping {} zero-variance column(s) before the protocol", pooled_.dropped.size());
    p_ = sh_.p_raw - static_cast<Index>(pooled_.dropped.size());
    require(p_ >= 2, ErrorCode::kProtocol, "fewer than 2 usable features after dropping");
    require(sh_.cfg.lifted_dim(p_) > p_, ErrorCode::kConfig,
            "flake.d: must exceed the feature count " + std::to_string(p_));
    std::vector<double> dropped(pooled_.dropped.begin(), pooled_.dropped.end());
    for (int i = 0; i < sh_.n_sources; ++i) {
      const auto to = PartyId::source(static_cast<std::uint32_t>(i));
      out.send(to, "pooled_stats", Tensor::vector(total));
      out.send(to, "dropped_columns", Tensor::vector(dropped));
    }
    out.send(PartyId::target(), "pooled_stats", Tensor::vector(total));
    out.send(PartyId::target(), "dropped_columns", Tensor::vector(dropped));
  }

  void average_hyperparams(const std::vector<Message>& inbox) {
    const VectorXd total = sum_vectors(take(inbox, "hp_share"));
    const double div = sh_.cfg.protocol.hp_weighted ? 1.0 : static_cast<double>(sh_.n_sources);
    hp_.clear();
    for (Index f = 0; f < p_; ++f) {
      hp_.push_back({total(f) / div, total(p_ + f) / div});
      hp_fallbacks_ += static_cast<std::int64_t>(std::llround(total(2 * p_ + f)));
    }
  }

  void encode(const std::vector<Message>& inbox, Outbox& out) {
    const auto masked = take(inbox, "masked_data");
    std::vector<std::vector<const Message*>> by_source(static_cast<std::size_t>(sh_.n_sources));
    std::vector<const Message*> by_target;
    for (const auto& m : masked) {
      if (m.sender.role == Role::kSource) {
        by_source.at(m.sender.index).push_back(&m);
      } else if (m.sender.role == Role::kTarget) {
        by_target.push_back(&m);
      }
    }
    require(static_cast<Index>(by_target.size()) == p_, ErrorCode::kProtocol,
            "aggregator: target masked data missing");
    std::vector<Index> counts;
    for (const auto& v : by_source) {
      require(static_cast<Index>(v.size()) == p_, ErrorCode::kProtocol,
              "aggregator: source masked data missing");
      counts.push_back(static_cast<Index>(v.front()->payload.rows()));
    }
    for (Index f = 0; f < p_; ++f) {
      std::vector<MaskedMatrix> parts;
      for (int i = 0; i < sh_.n_sources; ++i)
        parts.push_back({by_source[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)]
                             ->payload.as_matrix(),
                         i});
      const MaskedMatrix target{by_target[static_cast<std::size_t>(f)]->payload.as_matrix(), -1};
      const auto grams = privacy::gram_from_masked(parts, &target);
      const auto op = gpr::predictive_operator<double>(grams.g_ss(), grams.g_st(), grams.g_tt(),
                                                      hp_[static_cast<std::size_t>(f)]);
      const auto c = privacy::gen_encoding_mask(
          derive_seed(seed_, "encoding", static_cast<std::uint64_t>(f)), grams.target_rows());
      const MatrixXd encoded = c.c * op.weights;
      const auto blocks = privacy::split_columns(encoded, counts);
      for (int i = 0; i < sh_.n_sources; ++i)
        out.send(PartyId::source(static_cast<std::uint32_t>(i)), "encoded_block",
                 Tensor::matrix(blocks[static_cast<std::size_t>(i)]));
      out.send(PartyId::target(), "cinv", Tensor::matrix(c.c_inv));
      out.send(PartyId::target(), "pred_var",
               Tensor::vector(VectorXd(op.cov.diagonal().cwiseMax(0.0))));
    }
  }

  void make_grids(const std::vector<Message>& inbox, Outbox& out) {
    weight_table_ = take_one(inbox, "weights").payload.as_matrix();
    const VectorXd xty = sum_vectors(take(inbox, "xty_share"));
    const auto w = weights_by_domain(weight_table_);
    std::vector<VectorXd> rows;
    for (Index r = 0; r < weight_table_.rows(); ++r) {
      if (weight_table_(r, 1) == 0.0) continue;
      const VectorXd wd = weight_table_.row(r).tail(p_).transpose();
      const double lmax = wen::lambda_max_from_xty<double>(xty, sh_.cfg.wen.alpha, wd);
      const auto grid = wen::geometric_grid(lmax, sh_.cfg.lambda.grid_size, sh_.cfg.lambda.ratio);
      rows.push_back(Eigen::Map<const VectorXd>(grid.values.data(),
                                                static_cast<Index>(grid.values.size())));
    }
    require(!rows.empty(), ErrorCode::kProtocol, "no calibration domains");
    grids_.resize(static_cast<Index>(rows.size()), sh_.cfg.lambda.grid_size);
    for (std::size_t i = 0; i < rows.size(); ++i)
      grids_.row(static_cast<Index>(i)) = rows[i].transpose();
    for (int i = 0; i < sh_.n_sources; ++i) {
      const auto to = PartyId::source(static_cast<std::uint32_t>(i));
      out.send(to, "weights", Tensor::matrix(weight_table_));
      out.send(to, "lambda_grid", Tensor::matrix(grids_));
    }
  }

  void collect(const std::vector<Message>& inbox) {
    const auto shares = take(inbox, "coef_share");
    require(static_cast<int>(shares.size()) == sh_.n_sources, ErrorCode::kProtocol,
            "aggregator: missing coefficient shares");
    std::vector<MatrixXd> values;
    for (const auto& m : shares) values.push_back(m.payload.as_matrix());
    global_ = privacy::secure_sum(values);
  }

  void global_round(const Step& step, const std::vector<Message>& inbox, Outbox& out) {
    if (step.round == 0) {
      const Index rows = step.stage == 3 ? grids_.size() : lambda_pred_.rows();
      global_ = MatrixXd::Zero(rows, p_);
      if (step.stage == 4) {
        for (int i = 0; i < sh_.n_sources; ++i)
          out.send(PartyId::source(static_cast<std::uint32_t>(i)), "lambda_pred",
                   Tensor::matrix(lambda_pred_));
      }
    } else {
      collect(inbox);
    }
    for (int i = 0; i < sh_.n_sources; ++i)
      out.send(PartyId::source(static_cast<std::uint32_t>(i)), "global_coef",
               Tensor::matrix(global_));
  }

  // Rows [lambda | beta].
  void finish_training(const std::vector<Message>& inbox, Outbox& out, const std::string& kind) {
    collect(inbox);
    MatrixXd rows(global_.rows(), 1 + p_);
    if (kind == "models") {
      for (Index i = 0; i < grids_.rows(); ++i)
        for (Index j = 0; j < grids_.cols(); ++j) rows(i * grids_.cols() + j, 0) = grids_(i, j);
    } else {
      rows.col(0) = lambda_pred_.col(1);
    }
    rows.rightCols(p_) = global_;
    out.send(PartyId::target(), kind, Tensor::matrix(rows));
  }

  const Shared& sh_;
  std::uint64_t seed_;
  Pooled pooled_;
  Index p_ = 0;
  std::vector<gpr::HyperParams<double>> hp_;
  std::int64_t hp_fallbacks_ = 0;
  MatrixXd weight_table_;
  MatrixXd grids_;
  MatrixXd lambda_pred_;
  MatrixXd global_;
};

// ---------------------------------------------------------------- target

class TargetParty final : public Party {
 public:
  TargetParty(const Shared& shared, data::Dataset target, std::vector<double> similarities)
      : Party(PartyId::target()),
        sh_(shared),
        raw_(std::move(target)),
        similarities_(std::move(similarities)) {}

  bool act(const Step& step, const std::vector<Message>& inbox, Outbox& out) override {
    switch (step.kind) {
      case StepKind::kStats:
        mask_seed_ = tensor_seed(take_one(inbox, "mask_seed").payload);
        break;
      case StepKind::kHp:
        read_pooled(inbox);
        break;
      case StepKind::kMasked:
        send_masked(out);
        break;
      case StepKind::kMeanShare:
        cinv_ = take(inbox, "cinv");
        pred_var_ = take(inbox, "pred_var");
        break;
      case StepKind::kWeights:
        recover_means(inbox);
        send_weights(out);
        break;
      case StepKind::kLambdaPred:
        select_and_predict(inbox, out);
        break;
      case StepKind::kResults:
        score(inbox);
        break;
      default:
        return false;
    }
    return true;
  }

  // Results, read by the harness after the run.
  MatrixXd means, variances;
  std::vector<DomainWeights> weights;
  std::vector<DomainResult> results;
  std::vector<SweepRow> sweep;
  std::map<int, wen::Model<double>> final_models;
  SimilarityModel similarity;
  std::vector<Index> dropped;

  // Predictions on a domain in label units.
  VectorXd predict_labels(int domain, const VectorXd& beta) const {
    const auto rows = raw_.rows_of_domain(domain);
    const VectorXd z = x_(rows, Eigen::all) * beta;
    VectorXd y = data::destandardize_values(z, pooled_.labels);
    if (sh_.cfg.label_transform == "age") y = data::age_transform_inverse(y, {sh_.cfg.y_adult});
    return y;
  }
  VectorXd labels_of(int domain) const { return (*raw_.labels)(raw_.rows_of_domain(domain)); }
  const MatrixXd& standardized() const { return x_; }
  const data::FeatureStats& label_stats() const { return pooled_.labels; }

 private:
  void read_pooled(const std::vector<Message>& inbox) {
    pooled_ = unpack_pooled(take_one(inbox, "pooled_stats").payload.as_vector(), raw_.cols());
    dropped = pooled_.dropped;
    const data::Dataset kept = data::drop_columns(raw_, pooled_.dropped);
    x_ = data::standardize(kept, data::drop_stat_columns(pooled_.features, pooled_.dropped)).features;
  }

  void send_masked(Outbox& out) {
    const Index p = x_.cols();
    const Index d = sh_.cfg.lifted_dim(p);
    for (Index f = 0; f < p; ++f) {
      const MatrixXd t = feature_transform(*mask_seed_, p, f, d);
      const MatrixXd xf = x_(Eigen::all, others(p, f));
      out.send(PartyId::aggregator(), "masked_data", Tensor::matrix(xf * t));
    }
  }

  void recover_means(const std::vector<Message>& inbox) {
    const Index p = x_.cols();
    const Index nt = x_.rows();
    const auto shares = take(inbox, "mean_share");
    require(static_cast<Index>(cinv_.size()) == p && static_cast<Index>(pred_var_.size()) == p &&
                static_cast<Index>(shares.size()) == p * sh_.n_sources,
            ErrorCode::kProtocol, "target: incomplete feature-model messages");
    means.resize(nt, p);
    variances.resize(nt, p);
    // Shares arrive grouped by source, each in feature order.
    for (Index f = 0; f < p; ++f) {
      VectorXd total = VectorXd::Zero(nt);
      for (int i = 0; i < sh_.n_sources; ++i)
        total += shares[static_cast<std::size_t>(i * p + f)].payload.as_vector();
      means.col(f) = cinv_[static_cast<std::size_t>(f)].payload.as_matrix() * total;
      variances.col(f) = pred_var_[static_cast<std::size_t>(f)].payload.as_vector();
    }
    weights = domain_weights(x_, raw_.domain_ids, means, variances, sh_.cfg.protocol.k);
  }

  bool eligible(int d) const {
    return static_cast<int>(raw_.rows_of_domain(d).size()) >= sh_.cfg.lambda.min_samples;
  }

  void send_weights(Outbox& out) {
    const Index p = x_.cols();
    const int n_domains = raw_.domain_count();
    require(static_cast<int>(similarities_.size()) >= n_domains, ErrorCode::kProtocol,
            "target: missing similarity values");
    std::set<int> t1;
    if (sh_.cfg.lambda.sweep) {
      for (int d = 0; d < n_domains; ++d)
        if (eligible(d)) t1.insert(d);
      require(static_cast<int>(t1.size()) >= sh_.cfg.lambda.sweep_size, ErrorCode::kProtocol,
              "lambda sweep: fewer eligible domains than lambda.sweep_size");
    } else {
      for (int d : sh_.cfg.lambda.t1) {
        require(d < n_domains, ErrorCode::kProtocol, "lambda.t1: unknown domain " + std::to_string(d));
        t1.insert(d);
      }
      for (int d : sh_.cfg.lambda.t2)
        require(d < n_domains, ErrorCode::kProtocol, "lambda.t2: unknown domain " + std::to_string(d));
    }
    MatrixXd table(n_domains, p + 2);
    for (int d = 0; d < n_domains; ++d) {
      table(d, 0) = d;
      table(d, 1) = t1.count(d) ? 1.0 : 0.0;
      table.row(d).tail(p) = weights[static_cast<std::size_t>(d)].weight.transpose();
    }
    t1_.assign(t1.begin(), t1.end());
    out.send(PartyId::aggregator(), "weights", Tensor::matrix(table));
  }

  double mae_of(int domain, const VectorXd& beta) const {
    return wen::mae<double>(predict_labels(domain, beta), labels_of(domain));
  }

  void select_and_predict(const std::vector<Message>& inbox, Outbox& out) {
    const MatrixXd models = take_one(inbox, "models").payload.as_matrix();
    const Index g = sh_.cfg.lambda.grid_size;
    require(models.rows() == static_cast<Index>(t1_.size()) * g, ErrorCode::kProtocol,
            "target: model count does not match the grid");
    for (std::size_t i = 0; i < t1_.size(); ++i) {
      std::vector<double> maes;
      for (Index j = 0; j < g; ++j)
        maes.push_back(mae_of(t1_[i], coef_row(models, static_cast<Index>(i) * g + j)));
      const auto best = select_lambda(maes);
      lambda_opt_[t1_[i]] = models(static_cast<Index>(i) * g + static_cast<Index>(best), 0);
      mae_opt_[t1_[i]] = maes[best];
    }
    const bool log_space = sh_.cfg.lambda.fit_space == "log";
    std::vector<std::array<double, 2>> rows;
    if (!sh_.cfg.lambda.sweep) {
      std::vector<double> sims, lams;
      for (int d : t1_) {
        sims.push_back(similarities_[static_cast<std::size_t>(d)]);
        lams.push_back(lambda_opt_[d]);
      }
      similarity = fit_similarity_model(sims, lams, log_space);
      if (similarity.degenerate) spdlog::warn("similarity fit degenerate; using the mean lambda");
      for (int d : sh_.cfg.lambda.t2)
        rows.push_back({static_cast<double>(d), positive(similarity.predict(
                                                    similarities_[static_cast<std::size_t>(d)]))});
    } else {
      combos_.clear();
      std::vector<int> pick;
      enumerate(0, pick);
      for (const auto& combo : combos_) {
        std::vector<double> sims, lams;
        for (int d : combo) {
          sims.push_back(similarities_[static_cast<std::size_t>(d)]);
          lams.push_back(lambda_opt_[d]);
        }
        const auto model = fit_similarity_model(sims, lams, log_space);
        for (int d = 0; d < raw_.domain_count(); ++d) {
          if (std::find(combo.begin(), combo.end(), d) != combo.end()) continue;
          rows.push_back({static_cast<double>(d),
                          positive(model.predict(similarities_[static_cast<std::size_t>(d)]))});
        }
      }
    }
    MatrixXd pred(static_cast<Index>(rows.size()), 2);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      pred(static_cast<Index>(r), 0) = rows[r][0];
      pred(static_cast<Index>(r), 1) = rows[r][1];
    }
    pred_rows_ = pred;
    out.send(PartyId::aggregator(), "lambda_pred", Tensor::matrix(pred));
  }

  static VectorXd coef_row(const MatrixXd& models, Index r) {
    return models.row(r).tail(models.cols() - 1).transpose();
  }

  static double positive(double lambda) {
    // A linear-space fit can extrapolate below zero.
    return std::max(lambda, 0.0);
  }

  void enumerate(std::size_t start, std::vector<int>& pick) {
    if (static_cast<int>(pick.size()) == sh_.cfg.lambda.sweep_size) {
      combos_.push_back(pick);
      return;
    }
    for (std::size_t i = start; i < t1_.size(); ++i) {
      pick.push_back(t1_[i]);
      enumerate(i + 1, pick);
      pick.pop_back();
    }
  }

  void score(const std::vector<Message>& inbox) {
    const MatrixXd models = take_one(inbox, "final_models").payload.as_matrix();
    require(models.rows() == pred_rows_.rows(), ErrorCode::kProtocol,
            "target: final model count mismatch");
    results.clear();
    sweep.clear();
    if (!sh_.cfg.lambda.sweep) {
      for (int d : t1_) {
        results.push_back({d, static_cast<Index>(raw_.rows_of_domain(d).size()), "t1",
                           lambda_opt_[d], mae_opt_[d], 0.0});
      }
      for (Index r = 0; r < models.rows(); ++r) {
        const int d = static_cast<int>(pred_rows_(r, 0));
        const VectorXd beta = coef_row(models, r);
        final_models[d] = {beta};
        results.push_back({d, static_cast<Index>(raw_.rows_of_domain(d).size()), "t2",
                           pred_rows_(r, 1), mae_of(d, beta), 0.0});
      }
      return;
    }
    Index r = 0;
    for (const auto& combo : combos_) {
      for (int d = 0; d < raw_.domain_count(); ++d) {
        if (std::find(combo.begin(), combo.end(), d) != combo.end()) continue;
        sweep.push_back({combo, d, pred_rows_(r, 1), mae_of(d, coef_row(models, r)), 0.0});
        ++r;
      }
    }
    for (int d = 0; d < raw_.domain_count(); ++d) {
      double log_lam = 0, mae = 0;
      int n = 0;
      for (const auto& row : sweep) {
        if (row.domain != d) continue;
        log_lam += std::log(std::max(row.lambda_used, std::numeric_limits<double>::min()));
        mae += row.mae_freda;
        ++n;
      }
      if (n == 0) continue;
      results.push_back({d, static_cast<Index>(raw_.rows_of_domain(d).size()), "t2",
                         std::exp(log_lam / n), mae / n, 0.0});
    }
  }

  const Shared& sh_;
  data::Dataset raw_;
  std::vector<double> similarities_;
  std::optional<std::uint64_t> mask_seed_;
  Pooled pooled_;
  MatrixXd x_;
  std::vector<Message> cinv_, pred_var_;
  std::vector<int> t1_;
  std::map<int, double> lambda_opt_, mae_opt_;
  std::vector<std::vector<int>> combos_;
  MatrixXd pred_rows_;
};

std::vector<Step> build_schedule(const RunConfig& cfg) {
  std::vector<Step> s;
  s.push_back({StepKind::kSeeds, Phase::kSetup});
  s.push_back({StepKind::kStats, Phase::kSetup});
  s.push_back({StepKind::kPooled, Phase::kSetup});
  s.push_back({StepKind::kHp, Phase::kFeatureModels});
  s.push_back({StepKind::kMasked, Phase::kFeatureModels});
  s.push_back({StepKind::kEncode, Phase::kFeatureModels});
  s.push_back({StepKind::kMeanShare, Phase::kFeatureModels});
  s.push_back({StepKind::kWeights, Phase::kWeights});
  s.push_back({StepKind::kGrid, Phase::kWeights});
  for (int t = 0; t < cfg.wen.rounds; ++t) {
    s.push_back({StepKind::kGlobal, Phase::kLambdaSearch, 3, t});
    s.push_back({StepKind::kLocal, Phase::kLambdaSearch, 3, t});
  }
  s.push_back({StepKind::kModels, Phase::kLambdaSearch, 3, cfg.wen.rounds});
  s.push_back({StepKind::kLambdaPred, Phase::kLambdaSearch});
  s.push_back({StepKind::kFinalSetup, Phase::kFinalTraining});
  for (int t = 0; t < cfg.wen.rounds; ++t) {
    s.push_back({StepKind::kGlobal, Phase::kFinalTraining, 4, t});
    s.push_back({StepKind::kLocal, Phase::kFinalTraining, 4, t});
  }
  s.push_back({StepKind::kFinalModels, Phase::kFinalTraining, 4, cfg.wen.rounds});
  s.push_back({StepKind::kResults, Phase::kResults});
  return s;
}

}  // namespace

RunResult run_protocol(const RunConfig& cfg, const ProtocolInputs& inputs,
                       const RunOptions& options) {
  cfg.validate();
  require(!inputs.sources.empty(), ErrorCode::kProtocol, "no source clients");
  const Index p_raw = inputs.target.cols();
  for (const auto& s : inputs.sources) {
    s.validate();
    require(s.has_labels(), ErrorCode::kProtocol, "source shards must be labelled");
    require(s.cols() == p_raw, ErrorCode::kProtocol, "source/target feature counts differ");
  }
  inputs.target.validate();

  Shared shared{cfg, static_cast<int>(inputs.sources.size()), p_raw, {}};
  for (int i = 0; i < shared.n_sources; ++i) shared.source_ids.push_back(i);

  std::vector<std::unique_ptr<Party>> parties;
  auto aggregator = std::make_unique<AggregatorParty>(shared);
  AggregatorParty* agg = aggregator.get();
  parties.push_back(std::move(aggregator));
  for (int i = 0; i < shared.n_sources; ++i)
    parties.push_back(std::make_unique<SourceParty>(shared, i, inputs.sources[static_cast<std::size_t>(i)]));
  auto target = std::make_unique<TargetParty>(shared, inputs.target, inputs.similarities);
  TargetParty* tgt = target.get();
  parties.push_back(std::move(target));

  std::vector<PartyId> ids;
  for (const auto& party : parties) ids.push_back(party->id());
  auto transport = make_transport(options.transport, ids);

  RunResult result;
  result.config_digest = cfg.digest();
  auto& meta = result.transcript.meta();
  meta.master_seed = cfg.seed;
  meta.config_digest = result.config_digest;
  meta.n_sources = shared.n_sources;
  for (const char* name : {"data", "partition", "party-aggregator", "party-target"})
    meta.extra["seed." + std::string(name)] = std::to_string(sub_seed(cfg.seed, name));

  std::vector<Outbox> outboxes;
  outboxes.reserve(parties.size());
  for (const auto& party : parties)
    outboxes.emplace_back(party->id(), *transport, result.transcript, options);

  std::vector<std::vector<Message>> pending(parties.size());
  const auto steps = build_schedule(cfg);
  Phase current = Phase::kSetup;
  for (const auto& step : steps) {
    if (step.phase != current || &step == &steps.front()) {
      current = step.phase;
      spdlog::info("phase {}", phase_name(current));
    }
    for (std::size_t i = 0; i < parties.size(); ++i) {
      auto fresh = transport->drain(parties[i]->id());
      pending[i].insert(pending[i].end(), std::make_move_iterator(fresh.begin()),
                        std::make_move_iterator(fresh.end()));
    }
    auto run_one = [&](std::size_t i) {
      outboxes[i].set_phase(step.phase);
      try {
        if (parties[i]->act(step, pending[i], outboxes[i])) pending[i].clear();
      } catch (const Error& e) {
        throw Error(e.code(), "[" + phase_name(step.phase) + "] " + parties[i]->id().str() +
                                  ": " + e.what());
      }
    };
    if (options.concurrent) {
      std::vector<std::thread> threads;
      std::vector<std::exception_ptr> errors(parties.size());
      for (std::size_t i = 0; i < parties.size(); ++i) {
        threads.emplace_back([&, i] {
          try {
            run_one(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        });
      }
      for (auto& t : threads) t.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    } else {
      for (std::size_t i = 0; i < parties.size(); ++i) run_one(i);
    }
  }
  result.transcript.normalize();
  meta.p = agg->p();
  meta.d = cfg.lifted_dim(agg->p());

  result.hyperparams = agg->hyperparams();
  result.hp_fallbacks = agg->hp_fallbacks();
  result.feature_means = tgt->means;
  result.feature_vars = tgt->variances;
  result.weights = tgt->weights;
  result.similarity = tgt->similarity;
  result.dropped_columns = tgt->dropped;
  result.final_models = tgt->final_models;
  result.domains = tgt->results;
  result.sweep = tgt->sweep;
  result.feature_names = data::drop_columns(inputs.target, tgt->dropped).feature_names;

  // Non-adaptive baseline, computed by the harness on pooled plaintext.
  const auto enls = enls_domain_mae(cfg, inputs, tgt->dropped);
  auto enls_mae = [&](int d) { return enls.at(d); };
  for (auto& r : result.domains) r.mae_enls = enls_mae(r.domain);
  for (auto& r : result.sweep) r.mae_enls = enls_mae(r.domain);
  return result;
}

std::map<int, double> enls_domain_mae(const RunConfig& cfg, const ProtocolInputs& inputs,
                                      const std::vector<Index>& dropped) {
  std::vector<data::Dataset> kept;
  std::vector<data::FeatureStats> stats;
  for (const auto& s : inputs.sources) {
    kept.push_back(data::drop_columns(s, dropped));
    stats.push_back(data::local_stats(kept.back().features));
  }
  const data::Dataset pooled = data::concat_rows(kept);
  const auto fstats = data::merge_stats(stats);
  VectorXd ys = *pooled.labels;
  if (cfg.label_transform == "age") ys = data::age_transform(ys, {cfg.y_adult});
  const auto label_stats = data::local_stats(ys);
  const MatrixXd xs = data::standardize(pooled, fstats).features;
  const VectorXd yz = data::standardize_values(ys, label_stats);
  const auto enls = wen::en_ls_baseline<double>(xs, yz, cfg.wen.alpha, cfg.enls.folds,
                                                sub_seed(cfg.seed, "enls-folds"),
                                                cfg.lambda.grid_size, cfg.lambda.ratio);
  const MatrixXd xt = data::standardize(data::drop_columns(inputs.target, dropped), fstats).features;
  std::map<int, double> out;
  for (int d = 0; d < inputs.target.domain_count(); ++d) {
    const auto rows = inputs.target.rows_of_domain(d);
    if (rows.empty()) continue;
    VectorXd pred =
        data::destandardize_values(VectorXd(xt(rows, Eigen::all) * enls.model.beta), label_stats);
    if (cfg.label_transform == "age") pred = data::age_transform_inverse(pred, {cfg.y_adult});
    out[d] = wen::mae<double>(pred, VectorXd((*inputs.target.labels)(rows)));
  }
  return out;
}

std::string results_csv(const std::vector<DomainResult>& domains,
                        const std::vector<std::pair<std::string, std::string>>& header) {
  std::ostringstream o;
  for (const auto& [k, v] : header) o << "# " << k << "=" << v << "\n";
  o << "domain_id,n_samples,lambda_used,mae_freda,mae_enls\n";
  std::vector<DomainResult> sorted = domains;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const DomainResult& a, const DomainResult& b) { return a.domain < b.domain; });
  for (const auto& r : sorted) {
    if (r.role != "t2") continue;
    o << r.domain << ',' << r.n_samples << ',' << data::format_double(r.lambda_used) << ','
      << data::format_double(r.mae_freda) << ',' << data::format_double(r.mae_enls) << "\n";
  }
  return o.str();
}

RunResult run_full_protocol(const RunConfig& cfg) {
  RunOptions opt;
  opt.transport = cfg.transport.kind;
  opt.concurrent = cfg.transport.concurrent;
  return run_protocol(cfg, build_inputs(cfg), opt);
}

std::string RunResult::metrics_csv() const {
  return results_csv(domains, {{"pipeline", "federated"},
                               {"config_digest", config_digest},
                               {"transcript_digest", transcript.digest()},
                               {"master_seed", std::to_string(transcript.meta().master_seed)}});
}

std::string RunResult::digest() const { return sha256_hex(metrics_csv()); }

}  // namespace freda::protocol
