#pragma once

// String ids for catalog models, as used in scenario files.
//
//   radial(n[,m])                    x/|x| on B^n, m = n-1
//   constant(w...) | constant([w],n)
//   geodesic(a...)                   x -> (cos a.x, sin a.x)
//   homogeneous(k,[[v1],..],link[,n])  link: identity | constant(w...)
//   perturbed(base-id,amplitude,seed)
//   hyperplane(n) | simons-cone | sphere(n,R) | cylinder(n,axis[,radius])

#include "stratlab/core.hpp"
#include "stratlab/currents.hpp"
#include "stratlab/map_models.hpp"

#include <cctype>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace stratlab {

namespace id_syntax {

struct Node {
  enum class Kind { Number, Name, List, Call };
  Kind kind = Kind::Number;
  double number = 0.0;
  std::string name;
  std::vector<Node> items;  // List elements or Call arguments
};

class Parser {
 public:
  explicit Parser(std::string_view s) : s_(s) {}

  Node parse() {
    Node n = value();
    skip();
    if (pos_ != s_.size()) fail("trailing characters");
    return n;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("model id '" + std::string(s_) + "': " + what + " at offset " +
                      std::to_string(pos_));
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!eat(c)) fail(std::string("expected '") + c + "'");
  }

  std::vector<Node> sequence(char close) {
    std::vector<Node> out;
    if (eat(close)) return out;
    do out.push_back(value());
    while (eat(','));
    expect(close);
    return out;
  }

  Node value() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end");
    const char c = s_[pos_];
    if (c == '[') {
      ++pos_;
      Node n;
      n.kind = Node::Kind::List;
      n.items = sequence(']');
      return n;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.') {
      const std::string rest(s_.substr(pos_));
      std::size_t used = 0;
      Node n;
      try {
        n.number = std::stod(rest, &used);
      } catch (const std::exception&) {
        fail("bad number");
      }
      pos_ += used;
      return n;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) ||
                                  s_[pos_] == '-' || s_[pos_] == '_'))
        ++pos_;
      Node n;
      n.name = std::string(s_.substr(start, pos_ - start));
      if (eat('(')) {
        n.kind = Node::Kind::Call;
        n.items = sequence(')');
      } else {
        n.kind = Node::Kind::Name;
      }
      return n;
    }
    fail("unexpected character");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

inline double number(const Node& n, const std::string& ctx) {
  if (n.kind != Node::Kind::Number) throw ConfigError(ctx + ": expected a number");
  return n.number;
}

inline int integer(const Node& n, const std::string& ctx) {
  const double v = number(n, ctx);
  if (v != std::floor(v)) throw ConfigError(ctx + ": expected an integer");
  return static_cast<int>(v);
}

inline Vec vector(const std::vector<Node>& items, const std::string& ctx) {
  Vec v(static_cast<int>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) v(i) = number(items[i], ctx);
  return v;
}

/// Either a bracketed list or the bare numeric arguments.
inline Vec vector_arg(const std::vector<Node>& args, std::size_t& used, const std::string& ctx) {
  if (!args.empty() && args.front().kind == Node::Kind::List) {
    used = 1;
    return vector(args.front().items, ctx);
  }
  used = args.size();
  return vector(args, ctx);
}

inline std::string render(const Node& n) {
  switch (n.kind) {
    case Node::Kind::Number: {
      std::ostringstream os;
      os << n.number;
      return os.str();
    }
    case Node::Kind::Name: return n.name;
    case Node::Kind::List:
    case Node::Kind::Call: {
      std::string s = n.kind == Node::Kind::Call ? n.name + "(" : "[";
      for (std::size_t i = 0; i < n.items.size(); ++i) s += (i ? "," : "") + render(n.items[i]);
      return s + (n.kind == Node::Kind::Call ? ")" : "]");
    }
  }
  return {};
}

}  // namespace id_syntax

/// A parsed catalog entry: a harmonic-map model or a hypersurface.
struct CatalogModel {
  std::string id;
  std::optional<ManifoldMap> map;
  std::shared_ptr<const HypersurfaceModel> surface;
  bool stationary = false;  // satisfies the monotonicity identity exactly

  bool is_map() const { return map.has_value(); }
  bool is_surface() const { return surface != nullptr; }
  int dim() const { return is_map() ? map->dim() : surface->ambient_dim(); }
};

namespace detail {

inline CatalogModel build_model(const id_syntax::Node& node, double radius) {
  using id_syntax::Node;
  const std::string ctx = id_syntax::render(node);
  if (node.kind != Node::Kind::Call && node.kind != Node::Kind::Name)
    throw ConfigError("model id '" + ctx + "': expected a model name");
  const std::string& name = node.name;
  const auto& a = node.items;
  auto argc = [&](std::size_t lo, std::size_t hi) {
    if (a.size() < lo || a.size() > hi) throw ConfigError(ctx + ": wrong number of arguments");
  };
  CatalogModel out;
  out.id = ctx;
  try {
    if (name == "radial") {
      argc(1, 2);
      const int n = id_syntax::integer(a[0], ctx);
      if (a.size() == 2 && id_syntax::integer(a[1], ctx) != n - 1)
        throw UnsupportedModel(ctx + ": the radial map needs m = n - 1");
      out.map = radial_map(n, radius);
      out.stationary = true;
    } else if (name == "constant") {
      std::size_t used = 0;
      const Vec w = id_syntax::vector_arg(a, used, ctx);
      int n = static_cast<int>(w.size());
      if (used < a.size()) {
        if (a.size() != used + 1) throw ConfigError(ctx + ": wrong number of arguments");
        n = id_syntax::integer(a[used], ctx);
      }
      if (w.size() < 2 || w.norm() == 0.0) throw ConfigError(ctx + ": constant needs a nonzero w");
      out.map = constant_map(n, w, radius);
      out.stationary = true;
    } else if (name == "geodesic") {
      std::size_t used = 0;
      const Vec v = id_syntax::vector_arg(a, used, ctx);
      if (used != a.size() || v.size() < 1) throw ConfigError(ctx + ": geodesic needs a vector");
      out.map = geodesic_map(v, radius);
      out.stationary = true;
    } else if (name == "homogeneous") {
      argc(3, 4);
      const int k = id_syntax::integer(a[0], ctx);
      if (a[1].kind != Node::Kind::List) throw ConfigError(ctx + ": plane must be a list of vectors");
      const auto& rows = a[1].items;
      if (static_cast<int>(rows.size()) != k) throw ConfigError(ctx + ": plane needs k vectors");
      int n = -1;
      if (a.size() == 4) n = id_syntax::integer(a[3], ctx);
      if (k > 0) {
        if (rows[0].kind != Node::Kind::List) throw ConfigError(ctx + ": plane vectors must be lists");
        const int nn = static_cast<int>(rows[0].items.size());
        if (n >= 0 && n != nn) throw ConfigError(ctx + ": plane vectors do not match n");
        n = nn;
      }
      if (n < 1) throw ConfigError(ctx + ": homogeneous needs n when k = 0");
      Mat frame(n, k);
      for (int j = 0; j < k; ++j) {
        if (rows[j].kind != Node::Kind::List || static_cast<int>(rows[j].items.size()) != n)
          throw ConfigError(ctx + ": plane vectors must have n entries");
        frame.col(j) = id_syntax::vector(rows[j].items, ctx);
      }
      LinkMap link;
      const Node& l = a[2];
      if (l.kind == Node::Kind::Name && l.name == "identity") {
        link = LinkMap::identity();
      } else if ((l.kind == Node::Kind::Call) && l.name == "constant") {
        std::size_t used = 0;
        link = LinkMap::constant_value(id_syntax::vector_arg(l.items, used, ctx));
      } else {
        throw UnsupportedModel(ctx + ": unknown link '" + id_syntax::render(l) + "'");
      }
      out.map = as_map(make_homogeneous(zeros(n), frame, link), radius);
      out.stationary = true;
      // |grad f|^2 = (c-1)/|P y|^2 with c = n - k, so the energy on B_R is
      // (c-1)|S^{c-1}|/(c-2) times the integral of (R^2 - |t|^2)^{(c-2)/2}
      // over the k-ball of radius R; infinite for c = 2.
      const int c = n - k;
      double lambda = 0.0;
      if (link.kind == LinkMap::Kind::Identity) {
        if (c <= 2) {
          lambda = std::numeric_limits<double>::infinity();
        } else {
          // int_0^R t^{k-1} (R^2 - t^2)^{(c-2)/2} dt = R^{k+c-2} B(k/2, c/2) / 2.
          const double inner = k > 0 ? sphere_area(k - 1) * std::pow(radius, k + c - 2) *
                                           std::beta(0.5 * k, 0.5 * c) / 2.0
                                     : std::pow(radius, c - 2);
          lambda = (c - 1.0) * sphere_area(c - 1) / (c - 2.0) * inner;
        }
      }
      out.map = ManifoldMap(out.map->model_ptr(), radius, lambda);
    } else if (name == "perturbed") {
      argc(3, 3);
      const CatalogModel base = build_model(a[0], radius);
      if (!base.is_map()) throw UnsupportedModel(ctx + ": perturbed needs a map base");
      const double amp = id_syntax::number(a[1], ctx);
      const double seed = id_syntax::number(a[2], ctx);
      if (seed < 0 || seed != std::floor(seed)) throw ConfigError(ctx + ": seed must be a nonnegative integer");
      out.map = perturbed_map(*base.map, amp, static_cast<std::uint64_t>(seed));
      out.stationary = amp == 0.0 && base.stationary;
    } else if (name == "hyperplane") {
      argc(1, 1);
      out.surface = hyperplane(id_syntax::integer(a[0], ctx));
      out.stationary = true;
    } else if (name == "simons-cone") {
      argc(0, 0);
      out.surface = simons_cone();
      out.stationary = true;
    } else if (name == "sphere") {
      argc(2, 2);
      out.surface = sphere_surface(id_syntax::integer(a[0], ctx), id_syntax::number(a[1], ctx));
    } else if (name == "cylinder") {
      argc(2, 3);
      out.surface = cylinder_surface(id_syntax::integer(a[0], ctx), id_syntax::integer(a[1], ctx),
                                     a.size() == 3 ? id_syntax::number(a[2], ctx) : 0.5);
    } else {
      throw ConfigError("unknown model id '" + ctx + "'");
    }
  } catch (const UnsupportedModel& e) {
    throw ConfigError(e.what());
  } catch (const DegenerateFrame& e) {
    throw ConfigError(ctx + ": " + e.what());
  }
  return out;
}

}  // namespace detail

/// Parses a catalog id. Unknown names and malformed arguments raise
/// ConfigError.
inline CatalogModel parse_model(std::string_view id, double radius = kDefaultRadius) {
  const id_syntax::Node root = id_syntax::Parser(id).parse();
  return detail::build_model(root, radius);
}

struct CatalogDescription {
  std::string signature;
  std::string kind;  // "map" or "surface"
  std::string summary;
};

inline std::vector<CatalogDescription> catalog_descriptions() {
  return {
      {"radial(n[,m])", "map", "x/|x| from B^n to S^(n-1), m = n-1, singular at 0"},
      {"constant(w...)", "map", "constant map to w/|w|; constant([w],n) sets the domain"},
      {"geodesic(a...)", "map", "x -> (cos a.x, sin a.x), smooth"},
      {"homogeneous(k,[[v1],..],link[,n])", "map",
       "k-homogeneous along span(v); link identity or constant(w...)"},
      {"perturbed(base-id,amplitude,seed)", "map", "base plus smooth Fourier modes, renormalised"},
      {"hyperplane(n)", "surface", "{x_n = 0} in R^n"},
      {"simons-cone", "surface", "{|u| = |v|} in R^8, singular at 0"},
      {"sphere(n,R)", "surface", "round sphere of radius R in R^n"},
      {"cylinder(n,axis[,radius])", "surface", "S^(n-2)(radius) x R along e_axis, radius 0.5 by default"},
  };
}

}  // namespace stratlab
