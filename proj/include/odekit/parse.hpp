#pragma once

#include <cctype>
#include <regex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "odekit/error.hpp"
#include "odekit/expr.hpp"

namespace odekit {

/// Ordered state and parameter names plus the reserved time symbol `t`.
class SymbolTable {
 public:
  SymbolTable() = default;
  SymbolTable(std::vector<std::string> states, std::vector<std::string> parameters)
      : states_(std::move(states)), parameters_(std::move(parameters)) {
    validate();
  }

  static constexpr const char* kTime = "t";

  const std::vector<std::string>& states() const { return states_; }
  const std::vector<std::string>& parameters() const { return parameters_; }
  std::size_t num_states() const { return states_.size(); }
  std::size_t num_parameters() const { return parameters_.size(); }

  bool is_state(const std::string& name) const { return index_of(states_, name) >= 0; }
  bool is_parameter(const std::string& name) const { return index_of(parameters_, name) >= 0; }
  bool contains(const std::string& name) const { return name == kTime || is_state(name) || is_parameter(name); }

  int state_index(const std::string& name) const { return index_of(states_, name); }
  int parameter_index(const std::string& name) const { return index_of(parameters_, name); }

  SymbolTable with_parameters(const std::vector<std::string>& extra) const {
    std::vector<std::string> params = parameters_;
    params.insert(params.end(), extra.begin(), extra.end());
    return SymbolTable(states_, params);
  }

  static bool valid_name(const std::string& name) {
    static const std::regex pattern("[A-Za-z_][A-Za-z0-9_]*");
    return std::regex_match(name, pattern);
  }

 private:
  static int index_of(const std::vector<std::string>& names, const std::string& name) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return static_cast<int>(i);
    }
    return -1;
  }

  void validate() const {
    std::vector<std::string> seen{kTime};
    auto check = [&](const std::string& name) {
      if (!valid_name(name)) throw ModelError("invalid symbol name '" + name + "'");
      if (std::find(seen.begin(), seen.end(), name) != seen.end()) {
        throw ModelError("duplicate or reserved symbol name '" + name + "'");
      }
      seen.push_back(name);
    };
    for (const auto& s : states_) check(s);
    for (const auto& p : parameters_) check(p);
  }

  std::vector<std::string> states_;
  std::vector<std::string> parameters_;
};

namespace detail {

class Parser {
 public:
  Parser(std::string_view source, const SymbolTable* table) : src_(source), table_(table) {}

  Expr parse() {
    skip_space();
    if (pos_ >= src_.size()) throw ParseError("empty expression", 0);
    Expr e = expression();
    skip_space();
    if (pos_ != src_.size()) throw ParseError("unexpected '" + std::string(1, src_[pos_]) + "'", pos_);
    return e;
  }

 private:
  void skip_space() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(std::string_view token) {
    skip_space();
    if (src_.substr(pos_, token.size()) == token) {
      pos_ += token.size();
      return true;
    }
    return false;
  }

  bool peek_power() {
    skip_space();
    return src_.substr(pos_, 1) == "^" || src_.substr(pos_, 2) == "**";
  }

  Expr expression() {
    std::vector<Expr> terms{term()};
    while (true) {
      if (accept("+")) {
        terms.push_back(term());
      } else if (accept("-")) {
        terms.push_back(-term());
      } else {
        break;
      }
    }
    return make_sum(std::move(terms));
  }

  Expr term() {
    std::vector<Expr> factors{unary()};
    while (true) {
      skip_space();
      if (src_.substr(pos_, 2) == "**") break;
      if (accept("*")) {
        factors.push_back(unary());
      } else if (accept("/")) {
        factors.push_back(make_power(unary(), Expr(-1)));
      } else {
        break;
      }
    }
    return make_product(std::move(factors));
  }

  Expr unary() {
    if (accept("-")) return -unary();
    if (accept("+")) return unary();
    return power();
  }

  Expr power() {
    Expr base = primary();
    if (peek_power()) {
      if (!accept("**")) accept("^");
      return make_power(base, unary());
    }
    return base;
  }

  Expr primary() {
    skip_space();
    if (pos_ >= src_.size()) throw ParseError("unexpected end of expression", pos_);
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      Expr inner = expression();
      if (!accept(")")) throw ParseError("expected ')'", pos_);
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    throw ParseError("unexpected '" + std::string(1, c) + "'", pos_);
  }

  Expr number() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
      if (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) {
        pos_ = p;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      }
    }
    std::string_view text = src_.substr(start, pos_ - start);
    if (text == ".") throw ParseError("malformed number", start);
    return Expr(Number::from_literal(text));
  }

  Expr identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
      ++pos_;
    }
    std::string name(src_.substr(start, pos_ - start));
    skip_space();
    if (pos_ < src_.size() && src_[pos_] == '(') {
      static const std::unordered_map<std::string, int> functions{
          {"exp", 0}, {"log", 1}, {"abs", 2}, {"sin", 3}, {"cos", 4}, {"sqrt", 5}};
      auto it = functions.find(name);
      if (it == functions.end()) throw ParseError("unknown function '" + name + "'", start);
      ++pos_;
      Expr arg = expression();
      if (!accept(")")) throw ParseError("expected ')'", pos_);
      switch (it->second) {
        case 0: return make_function(Func::Exp, arg);
        case 1: return make_function(Func::Log, arg);
        case 2: return make_function(Func::Abs, arg);
        case 3: return make_function(Func::Sin, arg);
        case 4: return make_function(Func::Cos, arg);
        default: return sqrt(arg);
      }
    }
    if (name == "inf") return Expr(Number::real(INFINITY));
    if (table_ && !table_->contains(name)) throw UnknownSymbolError(name);
    return Expr::symbol(name);
  }

  std::string_view src_;
  const SymbolTable* table_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses an infix rate equation. Every identifier must be declared in
/// `table` (states, parameters, or `t`).
inline Expr parse(std::string_view source, const SymbolTable& table) { return detail::Parser(source, &table).parse(); }

/// Parses without a symbol table; any identifier becomes a symbol.
inline Expr parse_free(std::string_view source) { return detail::Parser(source, nullptr).parse(); }

}  // namespace odekit
