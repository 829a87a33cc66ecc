#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "tdbsde/errors.hpp"
#include "tdbsde/problem.hpp"

namespace tdbsde {

/// Named scalar parameters of a registered generator.
using Params = std::map<std::string, double>;

/// What a factory may need besides its parameters.
struct GeneratorContext {
  std::size_t m = 1;
  std::size_t d = 1;
  AtomMeasure rho = AtomMeasure::dirac(0.0);
};

using DriverFactory = std::function<Driver(const Params&, const GeneratorContext&)>;
using TerminalFactory = std::function<Terminal(const Params&, const GeneratorContext&)>;

namespace detail {

inline double param(const Params& p, const std::string& key, double fallback) {
  const auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

inline void check_keys(const Params& p, std::initializer_list<const char*> allowed, const std::string& name) {
  for (const auto& [k, v] : p) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw DomainError("generator '" + name + "': unknown parameter '" + k + "'");
    if (!std::isfinite(v)) throw DomainError("generator '" + name + "': parameter '" + k + "' is not finite");
  }
}

/// out_c = a y_c + b sum_j z_cj + kappa int y_c drho + kappa_z sum_j int z_cj drho + c.
inline Driver affine_driver(std::string name, double a, double b, double kappa, double kappa_z, double c,
                            const GeneratorContext& ctx) {
  Driver drv;
  drv.name = std::move(name);
  drv.delayed = kappa != 0.0 || kappa_z != 0.0;
  const std::size_t d = ctx.d;
  drv.eval = [a, b, kappa, kappa_z, c, d, rho = ctx.rho](const GeneratorArgs& g, std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      double v = a * g.y[i] + c;
      if (b != 0.0 && !g.z.empty()) {
        for (std::size_t j = 0; j < d; ++j) v += b * g.z[i * d + j];
      }
      if (kappa != 0.0) v += kappa * rho.integrate(g.y_seg, i);
      if (kappa_z != 0.0 && !g.z_seg.empty()) {
        for (std::size_t j = 0; j < d; ++j) v += kappa_z * rho.integrate(g.z_seg, i * d + j);
      }
      out[i] = v;
    }
  };
  return drv;
}

}  // namespace detail

/// Process-wide table of generator factories keyed by name. Built-ins are
/// registered on first use; plugins add entries with register_*.
class GeneratorRegistry {
 public:
  static GeneratorRegistry& instance() {
    static GeneratorRegistry r;
    return r;
  }

  void register_F(const std::string& name, DriverFactory f) {
    std::lock_guard lock(mu_);
    F_[name] = std::move(f);
  }
  void register_G(const std::string& name, DriverFactory f) {
    std::lock_guard lock(mu_);
    G_[name] = std::move(f);
  }
  void register_terminal(const std::string& name, TerminalFactory f) {
    std::lock_guard lock(mu_);
    xi_[name] = std::move(f);
  }

  bool has_F(const std::string& n) const { return has(F_, n); }
  bool has_G(const std::string& n) const { return has(G_, n); }
  bool has_terminal(const std::string& n) const { return has(xi_, n); }

  Driver make_F(const std::string& name, const Params& p, const GeneratorContext& ctx) const {
    return lookup(F_, name, "F")(p, ctx);
  }
  Driver make_G(const std::string& name, const Params& p, const GeneratorContext& ctx) const {
    return lookup(G_, name, "G")(p, ctx);
  }
  Terminal make_terminal(const std::string& name, const Params& p, const GeneratorContext& ctx) const {
    return lookup(xi_, name, "terminal")(p, ctx);
  }

  std::vector<std::string> F_names() const { return names(F_); }
  std::vector<std::string> G_names() const { return names(G_); }
  std::vector<std::string> terminal_names() const { return names(xi_); }

 private:
  GeneratorRegistry() { register_builtins(); }

  template <class Map>
  bool has(const Map& m, const std::string& n) const {
    std::lock_guard lock(mu_);
    return m.count(n) > 0;
  }

  template <class Map>
  typename Map::mapped_type lookup(const Map& m, const std::string& n, const char* slot) const {
    std::lock_guard lock(mu_);
    const auto it = m.find(n);
    if (it == m.end()) throw DomainError(std::string("no ") + slot + " generator named '" + n + "'");
    return it->second;
  }

  template <class Map>
  std::vector<std::string> names(const Map& m) const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& kv : m) out.push_back(kv.first);
    return out;
  }

  void register_builtins() {
    using detail::param;
    F_["zero"] = [](const Params& p, const GeneratorContext&) {
      detail::check_keys(p, {}, "zero");
      return Driver{};
    };
    F_["linear"] = [](const Params& p, const GeneratorContext& ctx) {
      detail::check_keys(p, {"a", "b", "c"}, "linear");
      return detail::affine_driver("linear", param(p, "a", 0), param(p, "b", 0), 0, 0, param(p, "c", 0), ctx);
    };
    F_["delayed-linear"] = [](const Params& p, const GeneratorContext& ctx) {
      detail::check_keys(p, {"a", "b", "kappa", "kappa_z", "c"}, "delayed-linear");
      return detail::affine_driver("delayed-linear", param(p, "a", 0), param(p, "b", 0), param(p, "kappa", 0),
                                   param(p, "kappa_z", 0), param(p, "c", 0), ctx);
    };
    F_["rho-integral"] = [](const Params& p, const GeneratorContext& ctx) {
      detail::check_keys(p, {"kappa", "kappa_z"}, "rho-integral");
      return detail::affine_driver("rho-integral", 0, 0, param(p, "kappa", 1), param(p, "kappa_z", 0), 0, ctx);
    };
    F_["sine"] = [](const Params& p, const GeneratorContext&) {
      detail::check_keys(p, {"a", "c"}, "sine");
      Driver drv;
      drv.name = "sine";
      drv.eval = [a = param(p, "a", 1), c = param(p, "c", 0)](const GeneratorArgs& g, std::span<double> out) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * std::sin(g.y[i]) + c;
      };
      return drv;
    };

    G_["zero"] = F_["zero"];
    G_["constant"] = [](const Params& p, const GeneratorContext& ctx) {
      detail::check_keys(p, {"c"}, "constant");
      return detail::affine_driver("constant", 0, 0, 0, 0, param(p, "c", 1), ctx);
    };
    G_["linear"] = [](const Params& p, const GeneratorContext& ctx) {
      detail::check_keys(p, {"b", "c"}, "linear");
      return detail::affine_driver("linear", param(p, "b", 0), 0, 0, 0, param(p, "c", 0), ctx);
    };
    G_["delayed-linear"] = [](const Params& p, const GeneratorContext& ctx) {
      detail::check_keys(p, {"b", "kappa", "c"}, "delayed-linear");
      return detail::affine_driver("delayed-linear", param(p, "b", 0), 0, param(p, "kappa", 0), 0,
                                   param(p, "c", 0), ctx);
    };
    G_["rho-integral"] = [](const Params& p, const GeneratorContext& ctx) {
      detail::check_keys(p, {"kappa"}, "rho-integral");
      return detail::affine_driver("rho-integral", 0, 0, param(p, "kappa", 1), 0, 0, ctx);
    };
    G_["sine"] = F_["sine"];

    xi_["zero"] = [](const Params& p, const GeneratorContext&) {
      detail::check_keys(p, {}, "zero");
      return Terminal{};
    };
    xi_["constant"] = [](const Params& p, const GeneratorContext&) {
      detail::check_keys(p, {"k"}, "constant");
      Terminal t;
      t.name = "constant";
      t.eval = [k = param(p, "k", 1)](const TerminalArgs&, std::span<double> out) {
        std::fill(out.begin(), out.end(), k);
      };
      return t;
    };
    auto brownian = [](const char* name, bool square) {
      return [name, square](const Params& p, const GeneratorContext& ctx) {
        detail::check_keys(p, {"scale", "shift"}, name);
        Terminal t;
        t.name = name;
        t.eval = [square, d = ctx.d, scale = param(p, "scale", 1), shift = param(p, "shift", 0)](
                     const TerminalArgs& a, std::span<double> out) {
          if (!a.ensemble || !a.ensemble->W) throw DomainError("terminal needs Brownian paths");
          const std::size_t last = a.ensemble->nodes() - 1;
          for (std::size_t i = 0; i < out.size(); ++i) {
            const double w = (*a.ensemble->W)(last, a.path, i % d);
            out[i] = scale * (square ? w * w : w) + shift;
          }
        };
        return t;
      };
    };
    xi_["brownian"] = brownian("brownian", false);
    xi_["brownian-square"] = brownian("brownian-square", true);
    xi_["exp-square"] = [](const Params& p, const GeneratorContext& ctx) {
      detail::check_keys(p, {"coef"}, "exp-square");
      Terminal t;
      t.name = "exp-square";
      t.eval = [d = ctx.d, coef = param(p, "coef", 0.25)](const TerminalArgs& a, std::span<double> out) {
        if (!a.ensemble || !a.ensemble->W) throw DomainError("terminal needs Brownian paths");
        const std::size_t last = a.ensemble->nodes() - 1;
        for (std::size_t i = 0; i < out.size(); ++i) {
          const double w = (*a.ensemble->W)(last, a.path, i % d);
          out[i] = std::exp(coef * w * w);
        }
      };
      return t;
    };
    xi_["increasing-terminal"] = [](const Params& p, const GeneratorContext&) {
      detail::check_keys(p, {"scale"}, "increasing-terminal");
      Terminal t;
      t.name = "increasing-terminal";
      t.eval = [scale = param(p, "scale", 1)](const TerminalArgs& a, std::span<double> out) {
        if (!a.ensemble || !a.ensemble->A) throw DomainError("terminal needs the increasing process");
        const double AT = (*a.ensemble->A)(a.ensemble->nodes() - 1, a.path);
        std::fill(out.begin(), out.end(), scale * AT);
      };
      return t;
    };
  }

  mutable std::mutex mu_;
  std::map<std::string, DriverFactory> F_;
  std::map<std::string, DriverFactory> G_;
  std::map<std::string, TerminalFactory> xi_;
};

}  // namespace tdbsde
