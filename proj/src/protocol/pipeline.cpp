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

#include "freda/protocol/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

namespace freda::protocol {

namespace {

std::vector<Index> all_but(Index p, Index f) {
  std::vector<Index> cols;
  for (Index j = 0; j < p; ++j)
    if (j != f) cols.push_back(j);
  return cols;
}

void combinations(const std::vector<int>& pool, int size, std::size_t start,
                  std::vector<int>& pick, std::vector<std::vector<int>>& out) {
  if (static_cast<int>(pick.size()) == size) {
    out.push_back(pick);
    return;
  }
  for (std::size_t i = start; i < pool.size(); ++i) {
    pick.push_back(pool[i]);
    combinations(pool, size, i + 1, pick, out);
    pick.pop_back();
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + path.string());
}

std::string models_csv(const std::map<int, wen::Model<double>>& models,
                       const std::vector<DomainResult>& domains,
                       const std::vector<std::string>& names) {
  std::ostringstream o;
  o << "domain_id,lambda";
  for (const auto& n : names) o << ',' << n;
  o << "\n";
  for (const auto& [d, m] : models) {
    double lambda = 0;
    for (const auto& r : domains)
      if (r.domain == d && r.role == "t2") lambda = r.lambda_used;
    o << d << ',' << data::format_double(lambda);
    for (Index f = 0; f < m.beta.size(); ++f) o << ',' << data::format_double(m.beta(f));
    o << "\n";
  }
  return o.str();
}

}  // namespace

OracleResult run_oracle(const RunConfig& cfg, const ProtocolInputs& inputs) {
  cfg.validate();
  OracleResult out;
  out.config_digest = cfg.digest();

  std::vector<data::FeatureStats> parts;
  for (const auto& s : inputs.sources) parts.push_back(data::local_stats(s.features));
  const auto raw_stats = data::merge_stats(parts);
  out.dropped_columns = data::zero_variance_columns(raw_stats);
  const auto fstats = data::drop_stat_columns(raw_stats, out.dropped_columns);

  std::vector<data::Dataset> kept;
  for (const auto& s : inputs.sources) kept.push_back(data::drop_columns(s, out.dropped_columns));
  const data::Dataset pooled = data::concat_rows(kept);
  VectorXd ylab = *pooled.labels;
  if (cfg.label_transform == "age") ylab = data::age_transform(ylab, {cfg.y_adult});
  const auto lstats = data::local_stats(ylab);
  const MatrixXd xs = data::standardize(pooled, fstats).features;
  const VectorXd ys = data::standardize_values(ylab, lstats);
  const data::Dataset& target = inputs.target;
  const MatrixXd xt =
      data::standardize(data::drop_columns(target, out.dropped_columns), fstats).features;
  const Index p = xs.cols();

  out.feature_means.resize(xt.rows(), p);
  out.feature_vars.resize(xt.rows(), p);
  const auto bounds = cfg.bounds();
  for (Index f = 0; f < p; ++f) {
    const auto cols = all_but(p, f);
    const MatrixXd xf = xs(Eigen::all, cols);
    const VectorXd yf = xs.col(f);
    gpr::HyperParams<double> hp;
    try {
      hp = cfg.gpr.fixed()
               ? gpr::HyperParams<double>{cfg.gpr.fixed_sigma_p2, cfg.gpr.fixed_sigma_n2}
               : gpr::optimize_hyperparams(xf, yf, bounds, gpr::HyperParams<double>{});
    } catch (const Error& e) {
      spdlog::warn("oracle: hyper-parameter search failed for feature {}: {}", f, e.what());
    }
    out.hyperparams.push_back(hp);
    const MatrixXd xtf = xt(Eigen::all, cols);
    const auto pred = gpr::gpr_posterior(xf, yf, xtf, hp);
    out.feature_means.col(f) = pred.mean;
    out.feature_vars.col(f) = pred.variance;
  }
  out.weights =
      domain_weights(xt, target.domain_ids, out.feature_means, out.feature_vars, cfg.protocol.k);

  auto mae_of = [&](int d, const VectorXd& beta) {
    const auto rows = target.rows_of_domain(d);
    VectorXd y = data::destandardize_values(VectorXd(xt(rows, Eigen::all) * beta), lstats);
    if (cfg.label_transform == "age") y = data::age_transform_inverse(y, {cfg.y_adult});
    return wen::mae<double>(y, VectorXd((*target.labels)(rows)));
  };
  auto wen_cfg = [&](int d, double lambda) {
    wen::Config<double> c;
    c.alpha = cfg.wen.alpha;
    c.lambda = lambda;
    c.weights = out.weights[static_cast<std::size_t>(d)].weight;
    return c;
  };

  const int n_domains = target.domain_count();
  std::vector<int> t1;
  if (cfg.lambda.sweep) {
    for (int d = 0; d < n_domains; ++d)
      if (static_cast<int>(target.rows_of_domain(d).size()) >= cfg.lambda.min_samples)
        t1.push_back(d);
    require(static_cast<int>(t1.size()) >= cfg.lambda.sweep_size, ErrorCode::kConfig,
            "lambda sweep: fewer eligible domains than lambda.sweep_size");
  } else {
    std::set<int> s(cfg.lambda.t1.begin(), cfg.lambda.t1.end());
    t1.assign(s.begin(), s.end());
    for (int d : t1) require(d < n_domains, ErrorCode::kConfig, "lambda.t1: unknown domain");
    for (int d : cfg.lambda.t2) require(d < n_domains, ErrorCode::kConfig, "lambda.t2: unknown domain");
  }

  std::map<int, double> lambda_opt, mae_opt;
  for (int d : t1) {
    auto c = wen_cfg(d, 0);
    const auto grid = wen::lambda_grid<double>(xs, ys, c, cfg.lambda.grid_size, cfg.lambda.ratio);
    std::vector<double> maes;
    VectorXd warm = VectorXd::Zero(p);
    for (double lambda : grid.values) {
      c.lambda = lambda;
      warm = wen::centralized_wen_oracle<double>(xs, ys, c, &warm).beta;
      maes.push_back(mae_of(d, warm));
    }
    const auto best = select_lambda(maes);
    lambda_opt[d] = grid.values[best];
    mae_opt[d] = maes[best];
  }

  const bool log_space = cfg.lambda.fit_space == "log";
  auto fit = [&](const std::vector<int>& domains) {
    std::vector<double> sims, lams;
    for (int d : domains) {
      sims.push_back(inputs.similarities.at(static_cast<std::size_t>(d)));
      lams.push_back(lambda_opt.at(d));
    }
    return fit_similarity_model(sims, lams, log_space);
  };
  auto final_model = [&](int d, double lambda) {
    return wen::centralized_wen_oracle<double>(xs, ys, wen_cfg(d, lambda));
  };
  auto n_of = [&](int d) { return static_cast<Index>(target.rows_of_domain(d).size()); };

  if (!cfg.lambda.sweep) {
    out.similarity = fit(t1);
    for (int d : t1) out.domains.push_back({d, n_of(d), "t1", lambda_opt[d], mae_opt[d], 0.0});
    for (int d : cfg.lambda.t2) {
      const double lambda =
          std::max(out.similarity.predict(inputs.similarities.at(static_cast<std::size_t>(d))), 0.0);
      const auto m = final_model(d, lambda);
      out.final_models[d] = m;
      out.domains.push_back({d, n_of(d), "t2", lambda, mae_of(d, m.beta), 0.0});
    }
  } else {
    std::vector<std::vector<int>> combos;
    std::vector<int> pick;
    combinations(t1, cfg.lambda.sweep_size, 0, pick, combos);
    for (const auto& combo : combos) {
      const auto model = fit(combo);
      for (int d = 0; d < n_domains; ++d) {
        if (std::find(combo.begin(), combo.end(), d) != combo.end()) continue;
        const double lambda =
            std::max(model.predict(inputs.similarities.at(static_cast<std::size_t>(d))), 0.0);
        out.sweep.push_back({combo, d, lambda, mae_of(d, final_model(d, lambda).beta), 0.0});
      }
    }
    for (int d = 0; d < n_domains; ++d) {
      double log_lam = 0, mae = 0;
      int n = 0;
      for (const auto& row : out.sweep) {
        if (row.domain != d) continue;
        log_lam += std::log(std::max(row.lambda_used, std::numeric_limits<double>::min()));
        mae += row.mae_freda;
        ++n;
      }
      if (n > 0) out.domains.push_back({d, n_of(d), "t2", std::exp(log_lam / n), mae / n, 0.0});
    }
  }

  const auto enls = enls_domain_mae(cfg, inputs, out.dropped_columns);
  for (auto& r : out.domains) r.mae_enls = enls.at(r.domain);
  for (auto& r : out.sweep) r.mae_enls = enls.at(r.domain);
  return out;
}

std::string OracleResult::metrics_csv() const {
  return results_csv(domains, {{"pipeline", "oracle"}, {"config_digest", config_digest}});
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream o;
  o << "t1,domain_id,lambda_used,mae_freda,mae_enls\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.t1.size(); ++i) o << (i ? ";" : "") << r.t1[i];
    o << ',' << r.domain << ',' << data::format_double(r.lambda_used) << ','
      << data::format_double(r.mae_freda) << ',' << data::format_double(r.mae_enls) << "\n";
  }
  return o.str();
}

void write_run_outputs(const std::filesystem::path& dir, const RunConfig& cfg,
                       const RunResult& result, const AuditReport& audit) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "results.csv", result.metrics_csv());
  result.transcript.write(dir / "transcript.jsonl", cfg.output.inline_payloads);
  write_text(dir / "audit.txt", audit.text());
  write_text(dir / "models.csv",
             models_csv(result.final_models, result.domains, result.feature_names));
  if (cfg.lambda.sweep) write_text(dir / "sweep.csv", sweep_csv(result.sweep));
}

void write_oracle_outputs(const std::filesystem::path& dir, const OracleResult& result) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "oracle_results.csv", result.metrics_csv());
  if (!result.sweep.empty()) write_text(dir / "oracle_sweep.csv", sweep_csv(result.sweep));
}

namespace {

double parse_number(const std::string& field, const std::string& where) {
  double v = 0;
  const char* end = field.data() + field.size();
  auto [ptr, err] = std::from_chars(field.data(), end, v);
  require(err == std::errc() && ptr == end, ErrorCode::kIo,
          where + ": bad number '" + field + "'");
  return v;
}

}  // namespace

ResultTable parse_results(const std::string& text, const std::string& name) {
  ResultTable t;
  t.path = name;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos) {
        std::string key = line.substr(1, eq - 1);
        key.erase(0, key.find_first_not_of(' '));
        t.meta[key] = line.substr(eq + 1);
      }
      continue;
    }
    if (!header) {
      require(line == "domain_id,n_samples,lambda_used,mae_freda,mae_enls", ErrorCode::kIo,
              name + ": unexpected results header");
      header = true;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    const std::string where = name + ":" + std::to_string(lineno);
    require(fields.size() == 5, ErrorCode::kIo, where + ": expected 5 fields");
    ResultRow r;
    r.domain = static_cast<int>(parse_number(fields[0], where));
    r.n_samples = static_cast<Index>(parse_number(fields[1], where));
    r.lambda_used = parse_number(fields[2], where);
    r.mae_freda = parse_number(fields[3], where);
    r.mae_enls = parse_number(fields[4], where);
    t.rows.push_back(r);
  }
  require(header, ErrorCode::kIo, name + ": no results header");
  return t;
}

ResultTable read_results(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_results(ss.str(), path.string());
}

std::string compare_results(const std::vector<ResultTable>& tables) {
  require(tables.size() >= 2, ErrorCode::kInvalidArgument, "compare: need at least two results");
  auto domains_of = [](const ResultTable& t) {
    std::vector<int> d;
    for (const auto& r : t.rows) d.push_back(r.domain);
    std::sort(d.begin(), d.end());
    return d;
  };
  const auto domains = domains_of(tables.front());
  for (const auto& t : tables)
    require(domains_of(t) == domains, ErrorCode::kInvalidArgument,
            "compare: domain sets differ between " + tables.front().path + " and " + t.path);
  auto row = [](const ResultTable& t, int d) -> const ResultRow& {
    for (const auto& r : t.rows)
      if (r.domain == d) return r;
    fail(ErrorCode::kInvalidArgument, "compare: missing domain");
  };
  std::ostringstream o;
  for (std::size_t i = 0; i < tables.size(); ++i) o << "# run" << i << "=" << tables[i].path << "\n";
  o << "domain_id";
  for (std::size_t i = 0; i < tables.size(); ++i)
    o << ",mae_freda_" << i << ",mae_enls_" << i;
  for (std::size_t i = 0; i < tables.size(); ++i) o << ",delta_freda_enls_" << i;
  for (std::size_t i = 1; i < tables.size(); ++i) o << ",delta_freda_" << i << "_0";
  o << "\n";
  for (int d : domains) {
    o << d;
    for (const auto& t : tables) {
      const auto& r = row(t, d);
      o << ',' << data::format_double(r.mae_freda) << ',' << data::format_double(r.mae_enls);
    }
    for (const auto& t : tables) {
      const auto& r = row(t, d);
      o << ',' << data::format_double(r.mae_freda - r.mae_enls);
    }
    const double base = row(tables.front(), d).mae_freda;
    for (std::size_t i = 1; i < tables.size(); ++i)
      o << ',' << data::format_double(row(tables[i], d).mae_freda - base);
    o << "\n";
  }
  return o.str();
}

}  // namespace freda::protocol
