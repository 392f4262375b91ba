#pragma once

#include <string>
#include <vector>

#include "fracorder/errors.hpp"

namespace fracorder {

// Tiny arithmetic grammar for coefficient and initial-data functions:
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := ('-'|'+') factor | power
//   power  := primary ('^' factor)?          right-associative
//   primary:= number | 'x' | 'pi' | ('exp'|'sin'|'cos') '(' expr ')' | '(' expr ')'
// so -x^2 is -(x^2) and 2^-x works.  PreconditionError on any syntax or
// domain problem (unknown name, trailing input, empty source).
class Expression {
public:
  static Expression parse(const std::string& src);

  double operator()(double x) const;
  std::vector<double> sample(const std::vector<double>& xs) const;
  const std::string& source() const noexcept { return src_; }

private:
  enum class Op : unsigned char { Const, Var, Pi, Add, Sub, Mul, Div, Pow, Neg, Exp, Sin, Cos };
  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    double value = 0.0;
  };

  std::vector<Node> nodes_;
  int root_ = -1;
  std::string src_;

  double eval(int node, double x) const;
};

}  // namespace fracorder
