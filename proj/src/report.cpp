#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "cacmda/evaluation.hpp"

namespace cacmda {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write report: " + path.string());
  return out;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(prec) << v;
  return ss.str();
}

void write_rows_csv(const std::vector<ReportRow>& rows,
                    const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "model,input_mode,auxiliary,strategy,test_env,seed,mse\n";
  for (const auto& r : rows)
    out << r.model << ',' << r.input_mode << ',' << r.auxiliary << ','
        << r.strategy << ',' << r.test_env << ',' << r.seed << ','
        << fmt(r.mse, 6) << "\n";
}

}  // namespace

void emit_report(const ExperimentReport& report,
                 const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_rows_csv(report.rows, out_dir / (report.name + "_rows.csv"));

  auto out = open_out(out_dir / (report.name + "_summary.txt"));
  out << report.name << " (config " << report.config_hash << ")\n\n";

  const auto models = report.distinct("model");
  const auto strategies = report.distinct("strategy");
  const auto envs = report.distinct("test_env");

  if (strategies.size() > 1 || envs.size() > 1) {
    // pivot: one block per strategy, models x test sites, plus an Average
    // column over sites
    for (const auto& strategy : strategies) {
      out << "strategy: " << strategy << "\n";
      out << std::left << std::setw(24) << "model";
      for (const auto& e : envs) out << std::setw(12) << e;
      out << std::setw(12) << "Average" << "\n";
      for (const auto& m : models) {
        std::vector<double> cell_means;
        std::ostringstream line;
        line << std::left << std::setw(24) << m;
        bool any = false;
        for (const auto& e : envs) {
          const CellStats s = report.aggregate(m, strategy, e);
          if (s.count == 0) {
            line << std::setw(12) << "-";
          } else {
            line << std::setw(12) << fmt(s.mean);
            cell_means.push_back(s.mean);
            any = true;
          }
        }
        if (!any) continue;
        double avg = 0.0;
        for (double v : cell_means) avg += v;
        avg /= static_cast<double>(cell_means.size());
        line << std::setw(12) << fmt(avg);
        out << line.str() << "\n";
      }
      out << "\n";
    }
  } else {
    out << std::left << std::setw(24) << "model" << std::setw(12) << "mean"
        << std::setw(12) << "stddev" << std::setw(8) << "n" << "\n";
    for (const auto& m : models) {
      const CellStats s = report.aggregate(m, "", "");
      out << std::left << std::setw(24) << m << std::setw(12) << fmt(s.mean)
          << std::setw(12) << fmt(s.stddev) << std::setw(8) << s.count << "\n";
    }
  }
}

void emit_report(const ImportanceReport& report,
                 const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_rows_csv(report.detail, out_dir / "importance_detail.csv");

  {
    auto out = open_out(out_dir / "importance.csv");
    out << "attribute,raw_gain,standardized_gain,rank\n";
    for (const auto& r : report.rows)
      out << r.attribute << ',' << fmt(r.raw_gain, 6) << ','
          << fmt(r.standardized_gain, 6) << ',' << r.rank << "\n";
  }

  {
    auto out = open_out(out_dir / "importance_summary.txt");
    out << "variable importance (config " << report.config_hash << ")\n";
    out << "full-model test mse: " << fmt(report.baseline_mse, 6) << "\n\n";
    auto rows = report.rows;
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.rank < b.rank; });
    out << std::left << std::setw(6) << "rank" << std::setw(20) << "attribute"
        << std::setw(14) << "raw_gain" << std::setw(14) << "z_gain" << "\n";
    for (const auto& r : rows)
      out << std::left << std::setw(6) << r.rank << std::setw(20) << r.attribute
          << std::setw(14) << fmt(r.raw_gain, 6) << std::setw(14)
          << fmt(r.standardized_gain) << "\n";
  }

  // horizontal bar chart of standardized gains, rank order top to bottom
  {
    auto rows = report.rows;
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.rank < b.rank; });
    double max_abs = 1e-12;
    for (const auto& r : rows)
      max_abs = std::max(max_abs, std::abs(r.standardized_gain));

    const int bar_h = 22, gap = 8, label_w = 150, chart_w = 420;
    const int width = label_w + chart_w + 20;
    const int height = 30 + static_cast<int>(rows.size()) * (bar_h + gap);
    const double zero_x = label_w + chart_w / 2.0;
    const double unit = (chart_w / 2.0 - 10) / max_abs;

    auto out = open_out(out_dir / "importance.svg");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" font-family=\"sans-serif\" "
        << "font-size=\"12\">\n";
    out << "  <line x1=\"" << zero_x << "\" y1=\"20\" x2=\"" << zero_x
        << "\" y2=\"" << height - 10 << "\" stroke=\"#888\"/>\n";
    int y = 30;
    for (const auto& r : rows) {
      const double len = std::abs(r.standardized_gain) * unit;
      const double x = r.standardized_gain >= 0 ? zero_x : zero_x - len;
      const char* fill = r.standardized_gain >= 0 ? "#2b7bba" : "#c44e52";
      out << "  <text x=\"" << label_w - 8 << "\" y=\"" << y + bar_h - 7
          << "\" text-anchor=\"end\">" << r.attribute << "</text>\n";
      out << "  <rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << len
          << "\" height=\"" << bar_h << "\" fill=\"" << fill << "\"/>\n";
      out << "  <text x=\""
          << (r.standardized_gain >= 0 ? x + len + 4 : x - 4) << "\" y=\""
          << y + bar_h - 7 << "\""
          << (r.standardized_gain >= 0 ? "" : " text-anchor=\"end\"") << ">"
          << fmt(r.standardized_gain, 2) << "</text>\n";
      y += bar_h + gap;
    }
    out << "</svg>\n";
  }
}

}  // namespace cacmda
