#pragma once

#include "ergow2/harness.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace ergow2 {

using json = nlohmann::json;

// Fixed formatting so identical runs produce byte-identical files.
inline std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Err::ConfigError, "cannot open " + path.string() + " for writing");
  out << text;
}

inline std::string to_csv(const std::vector<std::string>& header,
                          const std::vector<std::vector<double>>& rows) {
  std::string s;
  for (std::size_t i = 0; i < header.size(); ++i) {
    s += header[i];
    s += (i + 1 < header.size()) ? ',' : '\n';
  }
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      s += fmt_double(row[i]);
      s += (i + 1 < row.size()) ? ',' : '\n';
    }
  }
  return s;
}

inline std::string trajectory_csv(const Trajectory& traj) {
  std::vector<std::string> header{"t"};
  for (int k = 1; k <= traj.dim(); ++k) header.push_back("x" + std::to_string(k));
  std::vector<std::vector<double>> rows;
  for (long i = 0; i < traj.n(); ++i) {
    std::vector<double> row{traj.times[static_cast<std::size_t>(i)]};
    for (int k = 0; k < traj.dim(); ++k) row.push_back(traj.states(i, k));
    rows.push_back(std::move(row));
  }
  return to_csv(header, rows);
}

inline std::string measure_csv(const DiscreteMeasure& mu) {
  std::vector<std::string> header;
  for (int k = 1; k <= mu.dim(); ++k) header.push_back("x" + std::to_string(k));
  header.push_back("weight");
  std::vector<std::vector<double>> rows;
  for (long i = 0; i < mu.size(); ++i) {
    std::vector<double> row;
    for (int k = 0; k < mu.dim(); ++k) row.push_back(mu.points(i, k));
    row.push_back(mu.weights[i]);
    rows.push_back(std::move(row));
  }
  return to_csv(header, rows);
}

inline std::string plan_csv(const std::vector<TransportPlanEntry>& plan) {
  std::string s = "i,j,mass\n";
  for (const auto& e : plan) {
    s += std::to_string(e.i) + "," + std::to_string(e.j) + "," + fmt_double(e.mass) + "\n";
  }
  return s;
}

inline std::string rates_csv(const RateTable& table) {
  std::string s = "t,w2_mean,w2_sq_mean,stderr,w2_method,w2_gap\n";
  for (const auto& r : table.rows) {
    s += fmt_double(r.t) + "," + fmt_double(r.w2_mean) + "," + fmt_double(r.w2_sq_mean) + "," +
         fmt_double(r.se) + "," + w2_method_name(r.method) + "," + fmt_double(r.gap_mean) + "\n";
  }
  return s;
}

inline json to_json(const Box& box) {
  json j;
  j["lo"] = std::vector<double>(box.lo.data(), box.lo.data() + box.lo.size());
  j["hi"] = std::vector<double>(box.hi.data(), box.hi.data() + box.hi.size());
  return j;
}

inline json to_json(const ConfluenceReport& rep) {
  json j;
  j["alpha_hat"] = rep.alpha_hat;
  j["lipschitz_hat"] = rep.lipschitz_hat;
  j["violated"] = rep.violated;
  j["worst_pair"] = {std::vector<double>(rep.worst_x.data(), rep.worst_x.data() + rep.worst_x.size()),
                     std::vector<double>(rep.worst_y.data(), rep.worst_y.data() + rep.worst_y.size())};
  j["n_pairs"] = rep.n_pairs;
  j["box"] = to_json(rep.box);
  return j;
}

inline json to_json(const HajekReport& rep) {
  json j;
  j["k_prime"] = rep.k_prime;
  j["alpha_prime"] = rep.alpha_prime;
  j["box"] = to_json(rep.box);
  return j;
}

inline json to_json(const RateFitResult& fit) {
  json j;
  j["slope"] = fit.slope;
  j["intercept"] = fit.intercept;
  j["r_squared"] = fit.r_squared;
  j["slope_ci"] = {fit.slope - fit.slope_ci_halfwidth, fit.slope + fit.slope_ci_halfwidth};
  j["slope_ci_halfwidth"] = fit.slope_ci_halfwidth;
  j["n_points"] = fit.n_points;
  return j;
}

inline json to_json(const MomentReport& rep) {
  json j;
  for (const auto& [p, est] : rep.p_moments) {
    j["p_moments"][fmt_double(p)] = {{"estimate", est.mean}, {"stderr", est.se}};
  }
  if (rep.exp_moment) {
    j["exp_moment"] = {{"lambda", rep.exp_moment->first},
                       {"estimate", rep.exp_moment->second.mean},
                       {"stderr", rep.exp_moment->second.se}};
  }
  j["a_certified"] = rep.a_certified;
  return j;
}

inline json to_json(const ConcentrationReport& rep) {
  json j;
  j["part"] = rep.part == ConcentrationKind::Bounded ? "bounded" : "polynomial";
  j["t"] = rep.t;
  j["z"] = rep.z_name;
  j["ell_grid"] = rep.ell_grid;
  j["empirical_tail"] = rep.empirical_tail;
  j["binomial_stderr"] = rep.binomial_se;
  j["bound"] = rep.bound;
  return j;
}

// Minimal log-log SVG line plot of a (t, value) table.
inline std::string svg_line_plot(const std::vector<double>& xs, const std::vector<double>& ys,
                                 const std::string& title) {
  const int W = 640, H = 420, ML = 60, MR = 20, MT = 40, MB = 50;
  double lx0 = 1e300, lx1 = -1e300, ly0 = 1e300, ly1 = -1e300;
  std::vector<double> lx(xs.size()), ly(ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    lx[i] = std::log10(std::max(xs[i], 1e-300));
    ly[i] = std::log10(std::max(ys[i], 1e-300));
    lx0 = std::min(lx0, lx[i]);
    lx1 = std::max(lx1, lx[i]);
    ly0 = std::min(ly0, ly[i]);
    ly1 = std::max(ly1, ly[i]);
  }
  if (lx1 <= lx0) lx1 = lx0 + 1;
  if (ly1 <= ly0) ly1 = ly0 + 1;
  auto px = [&](double v) { return ML + (v - lx0) / (lx1 - lx0) * (W - ML - MR); };
  auto py = [&](double v) { return H - MB - (v - ly0) / (ly1 - ly0) * (H - MT - MB); };
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(W) +
                  "\" height=\"" + std::to_string(H) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + std::to_string(W / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" +
       title + "</text>\n";
  s += "<line x1=\"" + std::to_string(ML) + "\" y1=\"" + std::to_string(H - MB) + "\" x2=\"" +
       std::to_string(W - MR) + "\" y2=\"" + std::to_string(H - MB) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + std::to_string(ML) + "\" y1=\"" + std::to_string(MT) + "\" x2=\"" +
       std::to_string(ML) + "\" y2=\"" + std::to_string(H - MB) + "\" stroke=\"black\"/>\n";
  s += "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    s += fmt_double(px(lx[i])) + "," + fmt_double(py(ly[i])) + " ";
  }
  s += "\"/>\n";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    s += "<circle cx=\"" + fmt_double(px(lx[i])) + "\" cy=\"" + fmt_double(py(ly[i])) +
         "\" r=\"3\" fill=\"steelblue\"/>\n";
  }
  s += "<text x=\"" + std::to_string(W / 2) + "\" y=\"" + std::to_string(H - 12) +
       "\" text-anchor=\"middle\" font-size=\"12\">log10 t</text>\n";
  s += "</svg>\n";
  return s;
}

}  // namespace ergow2
