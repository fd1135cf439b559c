#pragma once

#include <cctype>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sgt/core.hpp"

namespace sgt {

/// Small arithmetic expression language for right-hand sides, output maps and
/// input signals: +, -, *, /, unary minus, parentheses, numbers, named
/// variables, and the calls min, max, exp, log, sqrt, abs, pow, tanh, and
/// sat(x) = clamp(x, -1, 1).
class Expr {
 public:
  static Expr parse(const std::string& text, const std::vector<std::string>& variables) {
    Parser p{text, 0, variables};
    Expr e;
    e.root_ = p.parse_expr(e.nodes_);
    p.skip_ws();
    if (p.pos != text.size())
      throw DataError("expr: trailing input at '" + text.substr(p.pos) + "'");
    return e;
  }

  real eval(std::span<const real> values) const { return eval_node(root_, values); }

  bool uses_variable(std::size_t slot) const {
    for (const auto& n : nodes_)
      if (n.op == Op::kVar && n.slot == slot) return true;
    return false;
  }

 private:
  enum class Op {
    kNum, kVar, kNeg, kAdd, kSub, kMul, kDiv,
    kMin, kMax, kExp, kLog, kSqrt, kAbs, kPow, kTanh, kSat
  };

  struct Node {
    Op op = Op::kNum;
    real value = 0.0;
    std::size_t slot = 0;
    int a = -1, b = -1;
  };

  real eval_node(int idx, std::span<const real> v) const {
    const Node& n = nodes_[static_cast<std::size_t>(idx)];
    switch (n.op) {
      case Op::kNum: return n.value;
      case Op::kVar: return v[n.slot];
      case Op::kNeg: return -eval_node(n.a, v);
      case Op::kAdd: return eval_node(n.a, v) + eval_node(n.b, v);
      case Op::kSub: return eval_node(n.a, v) - eval_node(n.b, v);
      case Op::kMul: return eval_node(n.a, v) * eval_node(n.b, v);
      case Op::kDiv: return eval_node(n.a, v) / eval_node(n.b, v);
      case Op::kMin: return std::min(eval_node(n.a, v), eval_node(n.b, v));
      case Op::kMax: return std::max(eval_node(n.a, v), eval_node(n.b, v));
      case Op::kExp: return std::exp(eval_node(n.a, v));
      case Op::kLog: return std::log(eval_node(n.a, v));
      case Op::kSqrt: return std::sqrt(eval_node(n.a, v));
      case Op::kAbs: return std::fabs(eval_node(n.a, v));
      case Op::kPow: return std::pow(eval_node(n.a, v), eval_node(n.b, v));
      case Op::kTanh: return std::tanh(eval_node(n.a, v));
      case Op::kSat: return std::clamp(eval_node(n.a, v), real(-1.0), real(1.0));
    }
    return 0.0;
  }

  struct Parser {
    const std::string& s;
    std::size_t pos;
    const std::vector<std::string>& vars;

    void skip_ws() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool eat(char c) {
      skip_ws();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }
    [[noreturn]] void fail(const std::string& what) {
      throw DataError("expr: " + what + " at position " + std::to_string(pos));
    }

    int parse_expr(std::vector<Node>& out) {
      int a = parse_term(out);
      for (;;) {
        skip_ws();
        if (eat('+'))
          a = push(out, {Op::kAdd, 0, 0, a, parse_term(out)});
        else if (eat('-'))
          a = push(out, {Op::kSub, 0, 0, a, parse_term(out)});
        else
          return a;
      }
    }
    int parse_term(std::vector<Node>& out) {
      int a = parse_unary(out);
      for (;;) {
        skip_ws();
        if (eat('*'))
          a = push(out, {Op::kMul, 0, 0, a, parse_unary(out)});
        else if (eat('/'))
          a = push(out, {Op::kDiv, 0, 0, a, parse_unary(out)});
        else
          return a;
      }
    }
    int parse_unary(std::vector<Node>& out) {
      if (eat('-')) return push(out, {Op::kNeg, 0, 0, parse_unary(out), -1});
      return parse_primary(out);
    }
    int parse_primary(std::vector<Node>& out) {
      skip_ws();
      if (eat('(')) {
        int e = parse_expr(out);
        if (!eat(')')) fail("expected ')'");
        return e;
      }
      if (pos >= s.size()) fail("unexpected end of input");
      char c = s[pos];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        char* end = nullptr;
        real v = std::strtod(s.c_str() + pos, &end);
        if (end == s.c_str() + pos) fail("bad number");
        pos = static_cast<std::size_t>(end - s.c_str());
        return push(out, {Op::kNum, v, 0, -1, -1});
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t start = pos;
        while (pos < s.size() &&
               (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_'))
          ++pos;
        std::string name = s.substr(start, pos - start);
        skip_ws();
        if (pos < s.size() && s[pos] == '(') return parse_call(out, name);
        for (std::size_t i = 0; i < vars.size(); ++i)
          if (vars[i] == name) return push(out, {Op::kVar, 0, i, -1, -1});
        fail("unknown variable '" + name + "'");
      }
      fail("unexpected character");
    }
    int parse_call(std::vector<Node>& out, const std::string& name) {
      static const std::map<std::string, std::pair<Op, int>> kFns = {
          {"min", {Op::kMin, 2}}, {"max", {Op::kMax, 2}},  {"exp", {Op::kExp, 1}},
          {"log", {Op::kLog, 1}}, {"sqrt", {Op::kSqrt, 1}}, {"abs", {Op::kAbs, 1}},
          {"pow", {Op::kPow, 2}}, {"tanh", {Op::kTanh, 1}}, {"sat", {Op::kSat, 1}}};
      auto it = kFns.find(name);
      if (it == kFns.end()) fail("unknown function '" + name + "'");
      if (!eat('(')) fail("expected '('");
      int a = parse_expr(out);
      int b = -1;
      if (it->second.second == 2) {
        if (!eat(',')) fail("expected ','");
        b = parse_expr(out);
      }
      if (!eat(')')) fail("expected ')'");
      return push(out, {it->second.first, 0, 0, a, b});
    }
    static int push(std::vector<Node>& out, Node n) {
      out.push_back(n);
      return static_cast<int>(out.size()) - 1;
    }
  };

  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace sgt
