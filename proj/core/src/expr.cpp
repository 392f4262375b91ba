#include "fracorder/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>

namespace fracorder {

Expression Expression::parse(const std::string& src) {
  Expression e;
  e.src_ = src;

  // local class: inherits the enclosing member function's access to Node/Op
  struct P {
    const std::string& s;
    std::size_t i;
    std::vector<Node>& nodes;

    void skip() {
      while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    }
    bool eat(char c) {
      skip();
      if (i < s.size() && s[i] == c) {
        ++i;
        return true;
      }
      return false;
    }
    [[noreturn]] void fail(const std::string& what) const {
      throw PreconditionError("expression: " + what + " at position " + std::to_string(i) +
                              " in \"" + s + "\"");
    }
    int add(Op op, int a = -1, int b = -1, double v = 0.0) {
      nodes.push_back(Node{op, a, b, v});
      return static_cast<int>(nodes.size()) - 1;
    }

    int expr() {
      int lhs = term();
      for (;;) {
        skip();
        if (i < s.size() && s[i] == '+') {
          ++i;
          lhs = add(Op::Add, lhs, term());
        } else if (i < s.size() && s[i] == '-') {
          ++i;
          lhs = add(Op::Sub, lhs, term());
        } else {
          return lhs;
        }
      }
    }
    int term() {
      int lhs = factor();
      for (;;) {
        skip();
        if (i < s.size() && s[i] == '*') {
          ++i;
          lhs = add(Op::Mul, lhs, factor());
        } else if (i < s.size() && s[i] == '/') {
          ++i;
          lhs = add(Op::Div, lhs, factor());
        } else {
          return lhs;
        }
      }
    }
    int factor() {
      skip();
      if (i < s.size() && s[i] == '-') {
        ++i;
        return add(Op::Neg, factor());
      }
      if (i < s.size() && s[i] == '+') {
        ++i;
        return factor();
      }
      return power();
    }
    int power() {
      const int base = primary();
      skip();
      if (i < s.size() && s[i] == '^') {
        ++i;
        return add(Op::Pow, base, factor());  // right-associative, exponent may be signed
      }
      return base;
    }
    int primary() {
      skip();
      if (i >= s.size()) fail("unexpected end of input");
      const char c = s[i];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
      if (std::isalpha(static_cast<unsigned char>(c))) {
        std::size_t j = i;
        while (j < s.size() && std::isalnum(static_cast<unsigned char>(s[j]))) ++j;
        const std::string name = s.substr(i, j - i);
        if (name == "x") {
          i = j;
          return add(Op::Var);
        }
        if (name == "pi") {
          i = j;
          return add(Op::Pi);
        }
        Op op;
        if (name == "exp") {
          op = Op::Exp;
        } else if (name == "sin") {
          op = Op::Sin;
        } else if (name == "cos") {
          op = Op::Cos;
        } else {
          fail("unknown name '" + name + "'");
        }
        i = j;
        if (!eat('(')) fail("expected '(' after '" + name + "'");
        const int arg = expr();
        if (!eat(')')) fail("expected ')'");
        return add(op, arg);
      }
      if (c == '(') {
        ++i;
        const int inner = expr();
        if (!eat(')')) fail("expected ')'");
        return inner;
      }
      fail(std::string("unexpected character '") + c + "'");
    }
    int number() {
      const char* first = s.data() + i;
      const char* last = s.data() + s.size();
      double v = 0.0;
      const auto [p, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || p == first) fail("malformed number");
      i = static_cast<std::size_t>(p - s.data());
      return add(Op::Const, -1, -1, v);
    }
  };

  P p{src, 0, e.nodes_};
  p.skip();
  if (p.i >= src.size()) throw PreconditionError("expression: empty source");
  e.root_ = p.expr();
  p.skip();
  if (p.i != src.size()) p.fail("trailing input");
  return e;
}

double Expression::eval(int node, double x) const {
  const Node& n = nodes_[static_cast<std::size_t>(node)];
  switch (n.op) {
    case Op::Const: return n.value;
    case Op::Var: return x;
    case Op::Pi: return std::numbers::pi;
    case Op::Add: return eval(n.a, x) + eval(n.b, x);
    case Op::Sub: return eval(n.a, x) - eval(n.b, x);
    case Op::Mul: return eval(n.a, x) * eval(n.b, x);
    case Op::Div: return eval(n.a, x) / eval(n.b, x);
    case Op::Pow: return std::pow(eval(n.a, x), eval(n.b, x));
    case Op::Neg: return -eval(n.a, x);
    case Op::Exp: return std::exp(eval(n.a, x));
    case Op::Sin: return std::sin(eval(n.a, x));
    case Op::Cos: return std::cos(eval(n.a, x));
  }
  return 0.0;  // unreachable
}

double Expression::operator()(double x) const {
  require(root_ >= 0, "expression: evaluated before parse");
  return eval(root_, x);
}

std::vector<double> Expression::sample(const std::vector<double>& xs) const {
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = (*this)(xs[i]);
  return out;
}

}  // namespace fracorder
