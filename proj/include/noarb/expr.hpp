#pragma once

// Coefficient expression language.
//
// A single free variable (spelled `x` or `t`), numeric literals, the binary
// operators + - * / ^, unary minus, the functions exp log sqrt abs min max pow
// and the constants pi and e. Grammar:
//
//   expr    := term { ('+' | '-') term }
//   term    := unary { ('*' | '/') unary }
//   unary   := '-' unary | power
//   power   := primary [ '^' unary ]            (right associative)
//   primary := number | 'x' | 't' | 'pi' | 'e'
//            | ident '(' expr { ',' expr } ')' | '(' expr ')'
//
// Evaluation never yields NaN: every operation that would produce one raises
// DomainError instead. Overflow to +-inf is an ordinary IEEE result.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace noarb {

class SyntaxError : public std::runtime_error {
 public:
  SyntaxError(std::size_t offset, std::string expected)
      : std::runtime_error("syntax error at offset " + std::to_string(offset) +
                           ": expected " + expected),
        offset_(offset),
        expected_(std::move(expected)) {}

  std::size_t offset() const noexcept { return offset_; }
  const std::string& expected() const noexcept { return expected_; }

 private:
  std::size_t offset_;
  std::string expected_;
};

class UnknownIdentifier : public std::runtime_error {
 public:
  UnknownIdentifier(std::string name, std::size_t offset)
      : std::runtime_error("unknown identifier '" + name + "' at offset " +
                           std::to_string(offset)),
        name_(std::move(name)) {}

  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class DomainError : public std::runtime_error {
 public:
  DomainError(std::string subexpression, double x, std::string what_failed)
      : std::runtime_error("domain error in '" + subexpression + "' at x=" +
                           format_double(x) + ": " + what_failed),
        subexpression_(std::move(subexpression)),
        x_(x) {}

  const std::string& subexpression() const noexcept { return subexpression_; }
  double x() const noexcept { return x_; }

  static std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), end);
  }

 private:
  std::string subexpression_;
  double x_;
};

enum class Op : std::uint8_t {
  Number,
  Var,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
  Neg,
  Exp,
  Log,
  Sqrt,
  Abs,
  Min,
  Max,
  PowFn,  // pow(a, b) written in call syntax
  Pi,
  E,
};

inline std::size_t arity(Op op) {
  switch (op) {
    case Op::Number:
    case Op::Var:
    case Op::Pi:
    case Op::E:
      return 0;
    case Op::Neg:
    case Op::Exp:
    case Op::Log:
    case Op::Sqrt:
    case Op::Abs:
      return 1;
    default:
      return 2;
  }
}

struct Node {
  Op op;
  double value = 0.0;  // Number only
  char var = 'x';      // Var only
  std::vector<std::shared_ptr<const Node>> kids;
};

using NodePtr = std::shared_ptr<const Node>;

namespace detail {

inline bool structurally_equal(const Node& a, const Node& b) {
  if (a.op != b.op || a.kids.size() != b.kids.size()) return false;
  if (a.op == Op::Number && a.value != b.value) return false;
  if (a.op == Op::Var && a.var != b.var) return false;
  for (std::size_t i = 0; i < a.kids.size(); ++i)
    if (!structurally_equal(*a.kids[i], *b.kids[i])) return false;
  return true;
}

inline int precedence(const Node& n) {
  switch (n.op) {
    case Op::Add:
    case Op::Sub:
      return 1;
    case Op::Mul:
    case Op::Div:
      return 2;
    case Op::Neg:
      return 3;
    case Op::Pow:
      return 4;
    default:
      return 5;
  }
}

inline void print_number(std::ostream& os, double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  os << std::string_view(buf.data(), static_cast<std::size_t>(end - buf.data()));
}

inline void print(std::ostream& os, const Node& n);

inline void print_child(std::ostream& os, const Node& child, bool parens) {
  if (parens) os << '(';
  print(os, child);
  if (parens) os << ')';
}

inline void print(std::ostream& os, const Node& n) {
  switch (n.op) {
    case Op::Number:
      print_number(os, n.value);
      return;
    case Op::Var:
      os << n.var;
      return;
    case Op::Pi:
      os << "pi";
      return;
    case Op::E:
      os << "e";
      return;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      const int p = precedence(n);
      print_child(os, *n.kids[0], precedence(*n.kids[0]) < p);
      switch (n.op) {
        case Op::Add: os << " + "; break;
        case Op::Sub: os << " - "; break;
        case Op::Mul: os << '*'; break;
        default: os << '/'; break;
      }
      print_child(os, *n.kids[1], precedence(*n.kids[1]) <= p);
      return;
    }
    case Op::Pow:
      print_child(os, *n.kids[0], precedence(*n.kids[0]) <= 4);
      os << '^';
      print_child(os, *n.kids[1], precedence(*n.kids[1]) <= 4);
      return;
    case Op::Neg:
      os << '-';
      print_child(os, *n.kids[0], precedence(*n.kids[0]) < 4);
      return;
    default: {
      static constexpr std::array<std::pair<Op, const char*>, 7> names{{
          {Op::Exp, "exp"}, {Op::Log, "log"}, {Op::Sqrt, "sqrt"}, {Op::Abs, "abs"},
          {Op::Min, "min"}, {Op::Max, "max"}, {Op::PowFn, "pow"}}};
      for (const auto& [op, name] : names)
        if (op == n.op) os << name;
      os << '(';
      for (std::size_t i = 0; i < n.kids.size(); ++i) {
        if (i) os << ", ";
        print(os, *n.kids[i]);
      }
      os << ')';
      return;
    }
  }
}

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) {}

  NodePtr parse() {
    auto e = expr();
    skip_ws();
    if (pos_ != src_.size()) throw SyntaxError(pos_, "end of input or operator");
    return e;
  }

 private:
  std::string_view src_;
  std::size_t pos_ = 0;

  void skip_ws() {
    while (pos_ < src_.size() &&
           (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' || src_[pos_] == '\r'))
      ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  static NodePtr make(Op op, std::vector<NodePtr> kids) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->kids = std::move(kids);
    return n;
  }

  NodePtr expr() {
    auto lhs = term();
    for (;;) {
      if (accept('+'))
        lhs = make(Op::Add, {lhs, term()});
      else if (accept('-'))
        lhs = make(Op::Sub, {lhs, term()});
      else
        return lhs;
    }
  }

  NodePtr term() {
    auto lhs = unary();
    for (;;) {
      if (accept('*'))
        lhs = make(Op::Mul, {lhs, unary()});
      else if (accept('/'))
        lhs = make(Op::Div, {lhs, unary()});
      else
        return lhs;
    }
  }

  NodePtr unary() {
    if (accept('-')) return make(Op::Neg, {unary()});
    return power();
  }

  NodePtr power() {
    auto base = primary();
    if (accept('^')) return make(Op::Pow, {base, unary()});
    return base;
  }

  NodePtr primary() {
    skip_ws();
    if (pos_ >= src_.size()) throw SyntaxError(pos_, "number, identifier or '('");
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      auto e = expr();
      if (!accept(')')) throw SyntaxError(pos_, "')'");
      return e;
    }
    if ((c >= '0' && c <= '9') || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    throw SyntaxError(pos_, "number, identifier or '('");
  }

  NodePtr number() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.'))
      ++pos_;
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      // Exponent only if followed by digits (optionally signed); otherwise
      // the 'e' belongs to what follows and is a syntax error there.
      std::size_t q = pos_ + 1;
      if (q < src_.size() && (src_[q] == '+' || src_[q] == '-')) ++q;
      if (q < src_.size() && std::isdigit(static_cast<unsigned char>(src_[q]))) {
        pos_ = q;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      }
    }
    double v = 0.0;
    const char* first = src_.data() + start;
    const char* last = src_.data() + pos_;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) throw SyntaxError(start, "numeric literal");
    auto n = std::make_shared<Node>();
    n->op = Op::Number;
    n->value = v;
    return n;
  }

  NodePtr identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      ++pos_;
    const std::string name(src_.substr(start, pos_ - start));
    if (name == "x" || name == "t") {
      auto n = std::make_shared<Node>();
      n->op = Op::Var;
      n->var = name[0];
      return n;
    }
    if (name == "pi") return make(Op::Pi, {});
    if (name == "e") return make(Op::E, {});

    static constexpr std::array<std::pair<std::string_view, Op>, 7> fns{{
        {"exp", Op::Exp}, {"log", Op::Log}, {"sqrt", Op::Sqrt}, {"abs", Op::Abs},
        {"min", Op::Min}, {"max", Op::Max}, {"pow", Op::PowFn}}};
    for (const auto& [fname, op] : fns) {
      if (fname != name) continue;
      if (!accept('(')) throw SyntaxError(pos_, "'(' after " + name);
      std::vector<NodePtr> args;
      args.push_back(expr());
      while (accept(',')) args.push_back(expr());
      if (!accept(')')) throw SyntaxError(pos_, "')' or ','");
      if (args.size() != arity(op))
        throw SyntaxError(start, name + " with " + std::to_string(arity(op)) + " argument(s)");
      return make(op, std::move(args));
    }
    throw UnknownIdentifier(name, start);
  }
};

// Flat postfix program; one instruction per AST node.
struct Instr {
  Op op;
  double value;
  const Node* node;  // for diagnostics
};

}  // namespace detail

/// Immutable parsed expression. Cheap to copy (shared tree), safe to evaluate
/// from any number of threads.
class Expr {
 public:
  Expr() : Expr(number(0.0)) {}

  static Expr parse(std::string_view source) { return Expr(detail::Parser(source).parse()); }

  static Expr number(double v) {
    if (v < 0.0 || (v == 0.0 && std::signbit(v))) return -number(-v);
    auto n = std::make_shared<Node>();
    n->op = Op::Number;
    n->value = v;
    return Expr(n);
  }

  static Expr variable(char name = 'x') {
    auto n = std::make_shared<Node>();
    n->op = Op::Var;
    n->var = name;
    return Expr(n);
  }

  static Expr apply(Op op, std::vector<Expr> args) {
    if (args.size() != arity(op)) throw std::invalid_argument("wrong arity for expression node");
    auto n = std::make_shared<Node>();
    n->op = op;
    for (auto& a : args) n->kids.push_back(a.root_);
    return Expr(n);
  }

  const Node& root() const { return *root_; }
  Expr child(std::size_t i) const { return Expr(root_->kids.at(i)); }
  const NodePtr& root_ptr() const { return root_; }

  std::string to_string() const {
    std::ostringstream os;
    detail::print(os, *root_);
    return os.str();
  }

  bool structurally_equals(const Expr& other) const {
    return detail::structurally_equal(*root_, *other.root_);
  }

  bool is_number() const { return root_->op == Op::Number; }
  bool is_number(double v) const { return is_number() && root_->value == v; }

  /// True when the expression does not mention the free variable.
  bool is_constant() const { return !mentions_variable(*root_); }

  double eval(double x) const {
    double inline_stack[kInlineStack];
    inline_stack[0] = 0.0;
    std::vector<double> heap_stack;
    double* stack = inline_stack;
    if (max_depth_ > kInlineStack) {
      heap_stack.resize(max_depth_);
      stack = heap_stack.data();
    }
    std::size_t sp = 0;
    for (const auto& ins : program_) {
      double r;
      switch (ins.op) {
        case Op::Number: r = ins.value; break;
        case Op::Var: r = x; break;
        case Op::Pi: r = std::numbers::pi; break;
        case Op::E: r = std::numbers::e; break;
        case Op::Neg: stack[sp - 1] = -stack[sp - 1]; continue;
        case Op::Exp: r = std::exp(stack[--sp]); break;
        case Op::Log: {
          const double a = stack[--sp];
          if (!(a > 0.0)) fail(ins, x, "log of non-positive value");
          r = std::log(a);
          break;
        }
        case Op::Sqrt: {
          const double a = stack[--sp];
          if (a < 0.0) fail(ins, x, "sqrt of negative value");
          r = std::sqrt(a);
          break;
        }
        case Op::Abs: r = std::fabs(stack[--sp]); break;
        default: {
          const double b = stack[--sp];
          const double a = stack[--sp];
          switch (ins.op) {
            case Op::Add: r = a + b; break;
            case Op::Sub: r = a - b; break;
            case Op::Mul: r = a * b; break;
            case Op::Div:
              if (b == 0.0) fail(ins, x, "division by zero");
              r = a / b;
              break;
            case Op::Min: r = std::fmin(a, b); break;
            case Op::Max: r = std::fmax(a, b); break;
            default: r = power(ins, a, b, x); break;
          }
        }
      }
      if (std::isnan(r)) fail(ins, x, "result is not a number");
      stack[sp++] = r;
    }
    return stack[0];
  }

  /// Evaluates on every grid point; a DomainError is rethrown with the grid
  /// index in the message.
  std::vector<double> sample(std::span<const double> grid) const {
    std::vector<double> out;
    out.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      try {
        out.push_back(eval(grid[i]));
      } catch (const DomainError& e) {
        throw DomainError(e.subexpression(), e.x(),
                          "at grid index " + std::to_string(i) + " (" + e.what() + ")");
      }
    }
    return out;
  }

  friend Expr operator+(const Expr& a, const Expr& b) { return apply(Op::Add, {a, b}); }
  friend Expr operator-(const Expr& a, const Expr& b) { return apply(Op::Sub, {a, b}); }
  friend Expr operator*(const Expr& a, const Expr& b) { return apply(Op::Mul, {a, b}); }
  friend Expr operator/(const Expr& a, const Expr& b) { return apply(Op::Div, {a, b}); }
  friend Expr operator-(const Expr& a) { return apply(Op::Neg, {a}); }
  friend Expr pow(const Expr& a, const Expr& b) { return apply(Op::Pow, {a, b}); }

 private:
  static constexpr std::size_t kInlineStack = 32;

  NodePtr root_;
  std::vector<detail::Instr> program_;
  std::size_t max_depth_ = 0;

  explicit Expr(NodePtr root) : root_(std::move(root)) {
    std::size_t depth = 0;
    compile(*root_, depth);
  }

  void compile(const Node& n, std::size_t& depth) {
    for (const auto& k : n.kids) compile(*k, depth);
    if (n.kids.empty())
      ++depth;
    else
      depth -= n.kids.size() - 1;
    max_depth_ = std::max(max_depth_, depth);
    program_.push_back({n.op, n.value, &n});
  }

  static bool mentions_variable(const Node& n) {
    if (n.op == Op::Var) return true;
    for (const auto& k : n.kids)
      if (mentions_variable(*k)) return true;
    return false;
  }

  [[noreturn]] static void fail(const detail::Instr& ins, double x, const char* why) {
    std::ostringstream os;
    detail::print(os, *ins.node);
    throw DomainError(os.str(), x, why);
  }

  static double power(const detail::Instr& ins, double a, double b, double x) {
    if (a == 0.0 && b < 0.0) fail(ins, x, "zero raised to a negative power");
    if (a < 0.0 && b != std::trunc(b)) fail(ins, x, "negative base with non-integer exponent");
    if (b == 2.0) return a * a;
    if (b == 1.0) return a;
    return std::pow(a, b);
  }
};

namespace expr_ops {

// Light algebraic cleanup used when the model layer composes coefficients.
// Only identities that are exact in floating point are applied.

inline Expr add(const Expr& a, const Expr& b) {
  if (a.is_number(0.0)) return b;
  if (b.is_number(0.0)) return a;
  return a + b;
}

inline Expr sub(const Expr& a, const Expr& b) {
  if (b.is_number(0.0)) return a;
  if (a.structurally_equals(b)) return Expr::number(0.0);
  return a - b;
}

inline Expr mul(const Expr& a, const Expr& b) {
  if (a.is_number(0.0) || b.is_number(0.0)) return Expr::number(0.0);
  if (a.is_number(1.0)) return b;
  if (b.is_number(1.0)) return a;
  return a * b;
}

inline Expr div(const Expr& a, const Expr& b) {
  if (a.is_number(0.0)) return Expr::number(0.0);
  if (b.is_number(1.0)) return a;
  if (a.structurally_equals(b)) return Expr::number(1.0);
  return a / b;
}

inline Expr neg(const Expr& a) {
  if (a.is_number(0.0)) return a;
  if (a.root().op == Op::Neg) return a.child(0);
  return -a;
}

inline Expr square(const Expr& a) { return pow(a, Expr::number(2.0)); }

}  // namespace expr_ops

}  // namespace noarb
