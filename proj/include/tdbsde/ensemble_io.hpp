#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "tdbsde/errors.hpp"
#include "tdbsde/grid_function.hpp"
#include "tdbsde/stochastic_engine.hpp"

namespace tdbsde {

namespace detail {

/// Long format `t,path,v_1..v_d`, path-major.
inline void write_path_csv(const std::filesystem::path& file, const PathArray& a, const TimeGrid& g) {
  std::ofstream os(file);
  if (!os) throw DomainError("cannot write " + file.string());
  os << "t,path";
  for (std::size_t c = 0; c < a.dim(); ++c) os << ",v_" << (c + 1);
  os << '\n';
  for (std::size_t p = 0; p < a.paths(); ++p) {
    for (std::size_t i = 0; i < a.nodes(); ++i) {
      os << format_double(g[i]) << ',' << p;
      for (std::size_t c = 0; c < a.dim(); ++c) os << ',' << format_double(a(i, p, c));
      os << '\n';
    }
  }
}

inline PathArray read_path_csv(const std::filesystem::path& file, const TimeGrid& g, std::size_t n_paths,
                               std::size_t dim) {
  std::ifstream is(file);
  if (!is) throw DomainError("cannot read " + file.string());
  PathArray a(g.size(), n_paths, dim);
  std::string line;
  std::getline(is, line);
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    const double t = std::stod(cell);
    std::getline(row, cell, ',');
    const std::size_t p = std::stoul(cell);
    const std::size_t i = g.index_of(t);
    if (p >= n_paths) throw DomainError(file.string() + ": path index out of range");
    for (std::size_t c = 0; c < dim; ++c) {
      if (!std::getline(row, cell, ',')) throw DomainError(file.string() + ": ragged row");
      a(i, p, c) = std::stod(cell);
    }
    ++rows;
  }
  if (rows != g.size() * n_paths) throw DomainError(file.string() + ": wrong number of rows");
  return a;
}

}  // namespace detail

/// Writes W.csv, A.csv (when realized) and ensemble.json into `dir`.
inline void save_ensemble(const std::filesystem::path& dir, const PathEnsemble& ens) {
  std::filesystem::create_directories(dir);
  const TimeGrid& g = *ens.grid;
  nlohmann::json man;
  man["seed"] = ens.seed;
  man["n_paths"] = ens.paths();
  man["d"] = ens.dim();
  man["grid"] = {{"nodes", std::vector<double>(g.nodes().begin(), g.nodes().end())}, {"delay", g.delay()}};
  man["A"] = ens.A ? nlohmann::json{{"label", ens.A_spec ? ens.A_spec->label() : std::string("external")},
                                    {"stochastic", ens.A_is_stochastic()}}
                   : nlohmann::json(nullptr);
  if (ens.W) detail::write_path_csv(dir / "W.csv", *ens.W, g);
  if (ens.A) detail::write_path_csv(dir / "A.csv", *ens.A, g);
  std::ofstream(dir / "ensemble.json") << man.dump(2) << '\n';
}

/// Inverse of save_ensemble. The A spec is not restored; only its values.
inline PathEnsemble load_ensemble(const std::filesystem::path& dir) {
  std::ifstream is(dir / "ensemble.json");
  if (!is) throw DomainError("no ensemble.json in " + dir.string());
  const nlohmann::json man = nlohmann::json::parse(is);
  auto grid = make_grid(TimeGrid(man.at("grid").at("nodes").get<std::vector<double>>(),
                                 man.at("grid").at("delay").get<double>()));
  const auto n_paths = man.at("n_paths").get<std::size_t>();
  const auto d = man.at("d").get<std::size_t>();
  PathEnsemble e = ensemble_from_paths(grid, detail::read_path_csv(dir / "W.csv", *grid, n_paths, d),
                                       man.at("seed").get<std::uint64_t>());
  if (!man.at("A").is_null()) {
    e.A = std::make_shared<const PathArray>(detail::read_path_csv(dir / "A.csv", *grid, n_paths, 1));
  }
  return e;
}

}  // namespace tdbsde
