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

#include "freda/protocol/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <variant>

#include "freda/digest.hpp"

namespace freda::protocol {

data::SyntheticConfig RunConfig::default_synthetic() {
  data::SyntheticConfig s;
  s.n_source_total = 200;
  s.n_target = 60;
  s.p = 30;
  s.n_clients = 2;
  s.n_target_domains = 5;
  s.shift_strength = {0.0, 0.8, 0.0, 0.5, 1.0};
  s.noise_sd = 0.5;
  s.support_size = 6;
  return s;
}

gpr::OptimBounds RunConfig::bounds() const {
  return gpr::OptimBounds::linear(gpr.sigma_lo, gpr.sigma_hi, gpr.max_evals);
}

namespace {

void check(bool ok, const std::string& field, const std::string& what) {
  require(ok, ErrorCode::kConfig, field + ": " + what);
}

}  // namespace

void RunConfig::validate() const {
  check(mode == "synthetic" || mode == "files", "mode", "must be \"synthetic\" or \"files\"");
  check(label_transform == "none" || label_transform == "age", "label_transform",
        "must be \"none\" or \"age\"");
  check(y_adult > 0 && std::isfinite(y_adult), "y_adult", "must be > 0");
  check(protocol.n_source_clients >= 1, "protocol.n_source_clients", "must be >= 1");
  if (mode == "synthetic") {
    data::SyntheticConfig s = synthetic;
    s.n_clients = protocol.n_source_clients;
    s.validate();
    check(label_transform == "none", "label_transform",
          "synthetic labels are not ages; use \"none\"");
  } else {
    check(!files.source.empty(), "files.source", "required in files mode");
    check(!files.target.empty(), "files.target", "required in files mode");
    check(!files.similarities.empty(), "files.similarities", "required in files mode");
  }
  check(protocol.k >= 0 && std::isfinite(protocol.k), "protocol.k", "must be >= 0");
  check(gpr.sigma_lo > 0 && gpr.sigma_lo < gpr.sigma_hi && std::isfinite(gpr.sigma_hi),
        "gpr.sigma_lo", "need 0 < sigma_lo < sigma_hi");
  check(gpr.max_evals >= 1, "gpr.max_evals", "must be >= 1");
  check(gpr.fixed_sigma_p2 >= 0 && gpr.fixed_sigma_n2 >= 0 && std::isfinite(gpr.fixed_sigma_p2) &&
            std::isfinite(gpr.fixed_sigma_n2) &&
            (gpr.fixed_sigma_p2 > 0) == (gpr.fixed_sigma_n2 > 0),
        "gpr.fixed_sigma_p2", "set both fixed values > 0, or neither");
  check(flake.d >= 0, "flake.d", "must be >= 0 (0 selects 2P)");
  check(wen.alpha > 0 && wen.alpha <= 1, "wen.alpha", "must be in (0, 1]");
  check(wen.rounds >= 1, "wen.rounds", "must be >= 1");
  check(wen.epochs >= 1, "wen.epochs", "must be >= 1");
  check(wen.eta_final > 0 && wen.eta_final <= wen.eta0, "wen.eta_final",
        "need 0 < eta_final <= eta0");
  check(lambda.grid_size >= 1, "lambda.grid_size", "must be >= 1");
  check(lambda.ratio > 0 && lambda.ratio < 1, "lambda.ratio", "must be in (0, 1)");
  check(lambda.fit_space == "log" || lambda.fit_space == "linear", "lambda.fit_space",
        "must be \"log\" or \"linear\"");
  check(lambda.min_samples >= 1, "lambda.min_samples", "must be >= 1");
  check(lambda.sweep_size >= 1, "lambda.sweep_size", "must be >= 1");
  if (!lambda.sweep) {
    check(!lambda.t1.empty(), "lambda.t1", "needs at least one domain");
    check(!lambda.t2.empty(), "lambda.t2", "needs at least one domain");
    std::set<int> seen;
    for (int d : lambda.t1) {
      check(d >= 0, "lambda.t1", "domain ids must be >= 0");
      check(seen.insert(d).second, "lambda.t1", "duplicate domain " + std::to_string(d));
    }
    for (int d : lambda.t2) {
      check(d >= 0, "lambda.t2", "domain ids must be >= 0");
      check(seen.insert(d).second, "lambda.t2",
            "domain " + std::to_string(d) + " repeated or also in t1");
    }
    if (mode == "synthetic") {
      for (int d : seen)
        check(d < synthetic.n_target_domains, "lambda",
              "domain " + std::to_string(d) + " exceeds synthetic.n_target_domains");
    }
  }
  check(enls.folds >= 2, "enls.folds", "must be >= 2");
  check(transport.kind == "memory" || transport.kind == "socket", "transport.kind",
        "must be \"memory\" or \"socket\"");
}

namespace {

std::string num(double v) { return data::format_double(v); }

template <typename T>
std::string list(const std::vector<T>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) {
      out += num(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out + "]";
}

}  // namespace

std::string RunConfig::canonical() const {
  std::ostringstream o;
  o << "mode=" << mode << "\nseed=" << seed << "\nlabel_transform=" << label_transform
    << "\ny_adult=" << num(y_adult) << "\n";
  if (mode == "synthetic") {
    const auto& s = synthetic;
    o << "synthetic.n_source_total=" << s.n_source_total << "\nsynthetic.n_target=" << s.n_target
      << "\nsynthetic.p=" << s.p << "\nsynthetic.n_target_domains=" << s.n_target_domains
      << "\nsynthetic.shift_strength=" << list(s.shift_strength)
      << "\nsynthetic.noise_sd=" << num(s.noise_sd) << "\nsynthetic.support_size=" << s.support_size
      << "\nsynthetic.rank=" << s.rank << "\nsynthetic.latent_noise=" << num(s.latent_noise)
      << "\nsynthetic.n_shifted=" << s.n_shifted << "\n";
  } else {
    o << "files.source=" << files.source << "\nfiles.target=" << files.target
      << "\nfiles.similarities=" << files.similarities << "\n";
  }
  o << "protocol.n_source_clients=" << protocol.n_source_clients << "\nprotocol.k=" << num(protocol.k)
    << "\nprotocol.hp_weighted=" << protocol.hp_weighted << "\ngpr.sigma_lo=" << num(gpr.sigma_lo)
    << "\ngpr.sigma_hi=" << num(gpr.sigma_hi) << "\ngpr.max_evals=" << gpr.max_evals
    << "\ngpr.fixed_sigma_p2=" << num(gpr.fixed_sigma_p2)
    << "\ngpr.fixed_sigma_n2=" << num(gpr.fixed_sigma_n2)
    << "\nflake.d=" << flake.d << "\nwen.alpha=" << num(wen.alpha) << "\nwen.rounds=" << wen.rounds
    << "\nwen.epochs=" << wen.epochs << "\nwen.eta0=" << num(wen.eta0)
    << "\nwen.eta_final=" << num(wen.eta_final) << "\nlambda.grid_size=" << lambda.grid_size
    << "\nlambda.ratio=" << num(lambda.ratio) << "\nlambda.t1=" << list(lambda.t1)
    << "\nlambda.t2=" << list(lambda.t2) << "\nlambda.fit_space=" << lambda.fit_space
    << "\nlambda.sweep=" << lambda.sweep << "\nlambda.min_samples=" << lambda.min_samples
    << "\nlambda.sweep_size=" << lambda.sweep_size << "\nenls.folds=" << enls.folds << "\n";
  // Transport and output options do not change results and stay out of the digest.
  return o.str();
}

std::string RunConfig::digest() const { return sha256_hex(canonical()); }

namespace {

struct Value;
using Array = std::vector<Value>;
struct Value {
  std::variant<std::int64_t, double, bool, std::string, Array> v;
};

class Parser {
 public:
  explicit Parser(const std::string& text) : text_(text) {}

  std::map<std::string, Value> parse() {
    std::map<std::string, Value> out;
    std::string table;
    std::istringstream in(text_);
    std::string raw;
    while (std::getline(in, raw)) {
      ++line_;
      line_text_ = strip_comment(raw);
      pos_ = 0;
      skip_ws();
      if (at_end()) continue;
      if (peek() == '[') {
        ++pos_;
        skip_ws();
        table = ident();
        skip_ws();
        expect(']');
        skip_ws();
        require_end();
        continue;
      }
      const std::string key = ident();
      skip_ws();
      expect('=');
      skip_ws();
      Value v = value();
      skip_ws();
      require_end();
      const std::string path = table.empty() ? key : table + "." + key;
      if (out.count(path)) error("duplicate key '" + path + "'");
      out[path] = std::move(v);
    }
    return out;
  }

 private:
  static std::string strip_comment(const std::string& s) {
    bool in_str = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') in_str = !in_str;
      if (s[i] == '#' && !in_str) return s.substr(0, i);
    }
    std::string out = s;
    if (!out.empty() && out.back() == '\r') out.pop_back();
    return out;
  }
  bool at_end() const { return pos_ >= line_text_.size(); }
  char peek() const { return line_text_[pos_]; }
  void skip_ws() {
    while (!at_end() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) ++pos_;
  }
  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorCode::kConfig, "config line " + std::to_string(line_) + ": " + what);
  }
  void expect(char c) {
    if (at_end() || peek() != c) error(std::string("expected '") + c + "'");
    ++pos_;
  }
  void require_end() {
    if (!at_end()) error("unexpected text '" + line_text_.substr(pos_) + "'");
  }
  std::string ident() {
    const std::size_t start = pos_;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_'))
      ++pos_;
    if (start == pos_) error("expected a name");
    return line_text_.substr(start, pos_ - start);
  }
  Value value() {
    if (at_end()) error("missing value");
    const char c = peek();
    if (c == '"') {
      ++pos_;
      std::string s;
      while (!at_end() && peek() != '"') {
        if (peek() == '\\') {
          ++pos_;
          if (at_end()) break;
        }
        s += peek();
        ++pos_;
      }
      expect('"');
      return {s};
    }
    if (c == '[') {
      ++pos_;
      Array items;
      skip_ws();
      while (!at_end() && peek() != ']') {
        items.push_back(value());
        skip_ws();
        if (!at_end() && peek() == ',') {
          ++pos_;
          skip_ws();
        }
      }
      expect(']');
      return {items};
    }
    const std::size_t start = pos_;
    while (!at_end() && peek() != ',' && peek() != ']' && peek() != ' ' && peek() != '\t') ++pos_;
    const std::string tok = line_text_.substr(start, pos_ - start);
    if (tok == "true") return {true};
    if (tok == "false") return {false};
    std::string clean;
    for (char ch : tok)
      if (ch != '_') clean += ch;
    const char* b = clean.data();
    const char* e = b + clean.size();
    if (clean.find_first_of(".eEinfa") == std::string::npos) {
      std::int64_t i = 0;
      auto r = std::from_chars(b, e, i);
      if (r.ec == std::errc() && r.ptr == e) return {i};
    }
    double d = 0;
    auto r = std::from_chars(b, e, d);
    if (r.ec == std::errc() && r.ptr == e) return {d};
    error("cannot parse value '" + tok + "'");
  }

  const std::string& text_;
  std::string line_text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

[[noreturn]] void type_error(const std::string& path, const std::string& want) {
  fail(ErrorCode::kConfig, path + ": expected " + want);
}

std::int64_t as_int(const Value& v, const std::string& path) {
  if (auto p = std::get_if<std::int64_t>(&v.v)) return *p;
  type_error(path, "an integer");
}

double as_double(const Value& v, const std::string& path) {
  if (auto p = std::get_if<double>(&v.v)) return *p;
  if (auto p = std::get_if<std::int64_t>(&v.v)) return static_cast<double>(*p);
  type_error(path, "a number");
}

bool as_bool(const Value& v, const std::string& path) {
  if (auto p = std::get_if<bool>(&v.v)) return *p;
  type_error(path, "true or false");
}

std::string as_string(const Value& v, const std::string& path) {
  if (auto p = std::get_if<std::string>(&v.v)) return *p;
  type_error(path, "a quoted string");
}

const Array& as_array(const Value& v, const std::string& path) {
  if (auto p = std::get_if<Array>(&v.v)) return *p;
  type_error(path, "an array");
}

int as_small_int(const Value& v, const std::string& path) {
  const auto i = as_int(v, path);
  if (i < INT32_MIN || i > INT32_MAX) fail(ErrorCode::kConfig, path + ": out of range");
  return static_cast<int>(i);
}

using Setter = std::function<void(const Value&, const std::string&, RunConfig&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["mode"] = [](auto& v, auto& p, RunConfig& c) { c.mode = as_string(v, p); };
    t["seed"] = [](auto& v, auto& p, RunConfig& c) {
      if (auto s = std::get_if<std::string>(&v.v)) {
        try {
          c.seed = std::stoull(*s);
        } catch (const std::exception&) {
          fail(ErrorCode::kConfig, p + ": not an unsigned 64-bit integer");
        }
        return;
      }
      const auto i = as_int(v, p);
      if (i < 0) fail(ErrorCode::kConfig, p + ": must be >= 0");
      c.seed = static_cast<std::uint64_t>(i);
    };
    t["out_dir"] = [](auto& v, auto& p, RunConfig& c) { c.out_dir = as_string(v, p); };
    t["label_transform"] = [](auto& v, auto& p, RunConfig& c) {
      c.label_transform = as_string(v, p);
    };
    t["y_adult"] = [](auto& v, auto& p, RunConfig& c) { c.y_adult = as_double(v, p); };

    t["synthetic.n_source_total"] = [](auto& v, auto& p, RunConfig& c) {
      c.synthetic.n_source_total = as_int(v, p);
    };
    t["synthetic.n_target"] = [](auto& v, auto& p, RunConfig& c) {
      c.synthetic.n_target = as_int(v, p);
    };
    t["synthetic.p"] = [](auto& v, auto& p, RunConfig& c) { c.synthetic.p = as_int(v, p); };
    t["synthetic.n_target_domains"] = [](auto& v, auto& p, RunConfig& c) {
      c.synthetic.n_target_domains = as_small_int(v, p);
    };
    t["synthetic.shift_strength"] = [](auto& v, auto& p, RunConfig& c) {
      c.synthetic.shift_strength.clear();
      for (const auto& x : as_array(v, p)) c.synthetic.shift_strength.push_back(as_double(x, p));
    };
    t["synthetic.noise_sd"] = [](auto& v, auto& p, RunConfig& c) {
      c.synthetic.noise_sd = as_double(v, p);
    };
    t["synthetic.support_size"] = [](auto& v, auto& p, RunConfig& c) {
      c.synthetic.support_size = as_int(v, p);
    };
    t["synthetic.rank"] = [](auto& v, auto& p, RunConfig& c) { c.synthetic.rank = as_int(v, p); };
    t["synthetic.latent_noise"] = [](auto& v, auto& p, RunConfig& c) {
      c.synthetic.latent_noise = as_double(v, p);
    };
    t["synthetic.n_shifted"] = [](auto& v, auto& p, RunConfig& c) {
      c.synthetic.n_shifted = as_int(v, p);
    };

    t["files.source"] = [](auto& v, auto& p, RunConfig& c) { c.files.source = as_string(v, p); };
    t["files.target"] = [](auto& v, auto& p, RunConfig& c) { c.files.target = as_string(v, p); };
    t["files.similarities"] = [](auto& v, auto& p, RunConfig& c) {
      c.files.similarities = as_string(v, p);
    };

    t["protocol.n_source_clients"] = [](auto& v, auto& p, RunConfig& c) {
      c.protocol.n_source_clients = as_small_int(v, p);
    };
    t["protocol.k"] = [](auto& v, auto& p, RunConfig& c) { c.protocol.k = as_double(v, p); };
    t["protocol.hp_weighted"] = [](auto& v, auto& p, RunConfig& c) {
      c.protocol.hp_weighted = as_bool(v, p);
    };

    t["gpr.sigma_lo"] = [](auto& v, auto& p, RunConfig& c) { c.gpr.sigma_lo = as_double(v, p); };
    t["gpr.sigma_hi"] = [](auto& v, auto& p, RunConfig& c) { c.gpr.sigma_hi = as_double(v, p); };
    t["gpr.max_evals"] = [](auto& v, auto& p, RunConfig& c) {
      c.gpr.max_evals = as_small_int(v, p);
    };
    t["gpr.fixed_sigma_p2"] = [](auto& v, auto& p, RunConfig& c) {
      c.gpr.fixed_sigma_p2 = as_double(v, p);
    };
    t["gpr.fixed_sigma_n2"] = [](auto& v, auto& p, RunConfig& c) {
      c.gpr.fixed_sigma_n2 = as_double(v, p);
    };
    t["flake.d"] = [](auto& v, auto& p, RunConfig& c) { c.flake.d = as_small_int(v, p); };

    t["wen.alpha"] = [](auto& v, auto& p, RunConfig& c) { c.wen.alpha = as_double(v, p); };
    t["wen.rounds"] = [](auto& v, auto& p, RunConfig& c) { c.wen.rounds = as_small_int(v, p); };
    t["wen.epochs"] = [](auto& v, auto& p, RunConfig& c) { c.wen.epochs = as_small_int(v, p); };
    t["wen.eta0"] = [](auto& v, auto& p, RunConfig& c) { c.wen.eta0 = as_double(v, p); };
    t["wen.eta_final"] = [](auto& v, auto& p, RunConfig& c) {
      c.wen.eta_final = as_double(v, p);
    };

    t["lambda.grid_size"] = [](auto& v, auto& p, RunConfig& c) {
      c.lambda.grid_size = as_small_int(v, p);
    };
    t["lambda.ratio"] = [](auto& v, auto& p, RunConfig& c) { c.lambda.ratio = as_double(v, p); };
    t["lambda.t1"] = [](auto& v, auto& p, RunConfig& c) {
      c.lambda.t1.clear();
      for (const auto& x : as_array(v, p)) c.lambda.t1.push_back(as_small_int(x, p));
    };
    t["lambda.t2"] = [](auto& v, auto& p, RunConfig& c) {
      c.lambda.t2.clear();
      for (const auto& x : as_array(v, p)) c.lambda.t2.push_back(as_small_int(x, p));
    };
    t["lambda.fit_space"] = [](auto& v, auto& p, RunConfig& c) {
      c.lambda.fit_space = as_string(v, p);
    };
    t["lambda.sweep"] = [](auto& v, auto& p, RunConfig& c) { c.lambda.sweep = as_bool(v, p); };
    t["lambda.min_samples"] = [](auto& v, auto& p, RunConfig& c) {
      c.lambda.min_samples = as_small_int(v, p);
    };
    t["lambda.sweep_size"] = [](auto& v, auto& p, RunConfig& c) {
      c.lambda.sweep_size = as_small_int(v, p);
    };
    t["enls.folds"] = [](auto& v, auto& p, RunConfig& c) { c.enls.folds = as_small_int(v, p); };
    t["transport.kind"] = [](auto& v, auto& p, RunConfig& c) {
      c.transport.kind = as_string(v, p);
    };
    t["transport.concurrent"] = [](auto& v, auto& p, RunConfig& c) {
      c.transport.concurrent = as_bool(v, p);
    };
    t["output.inline_payloads"] = [](auto& v, auto& p, RunConfig& c) {
      c.output.inline_payloads = as_bool(v, p);
    };
    return t;
  }();
  return table;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  const auto values = Parser(text).parse();
  RunConfig cfg;
  for (const auto& [path, value] : values) {
    auto it = setters().find(path);
    require(it != setters().end(), ErrorCode::kConfig, path + ": unknown key");
    it->second(value, path, cfg);
  }
  // The domain count follows the shift list unless given explicitly.
  if (!values.count("synthetic.n_target_domains") && values.count("synthetic.shift_strength"))
    cfg.synthetic.n_target_domains = static_cast<int>(cfg.synthetic.shift_strength.size());
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  RunConfig cfg = parse_config(ss.str());
  // Relative data paths resolve against the config file's directory.
  const auto base = path.parent_path();
  for (std::string* f : {&cfg.files.source, &cfg.files.target, &cfg.files.similarities}) {
    if (!f->empty() && std::filesystem::path(*f).is_relative()) *f = (base / *f).string();
  }
  return cfg;
}

}  // namespace freda::protocol
