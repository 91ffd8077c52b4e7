#include "idm/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "idm/csv.hpp"
#include "idm/error.hpp"

namespace idm {

namespace {

CovariateProfile parse_profile(std::string_view label, int line) {
  CovariateProfile p;
  if (label == "baseline" || label.empty()) return p;
  std::size_t pos = 0;
  while (pos <= label.size()) {
    const auto end = std::min(label.find(';', pos), label.size());
    const auto item = label.substr(pos, end - pos);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos || eq == 0)
      throw ConfigError(fmt::format("line {}: profile '{}' is not name=value;...", line, label));
    try {
      p[std::string(item.substr(0, eq))] = std::stod(std::string(item.substr(eq + 1)));
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("line {}: profile value in '{}' is not a number", line, label));
    }
    pos = end + 1;
  }
  return p;
}

double number(const std::string& s, int line, std::string_view column) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size())
    throw ConfigError(fmt::format("line {}: column {} value '{}' is not a number", line, column, s));
  return v;
}

const char* const kPalette[] = {"#1b6ca8", "#c0392b", "#27864a", "#8e44ad", "#d68910", "#566573"};

std::string curve_name(const CurveTable& c) {
  std::string name = c.stratum.empty() ? std::string() : c.stratum;
  if (!c.profile.empty()) name += (name.empty() ? "" : ", ") + profile_label(c.profile);
  return name.empty() ? std::string(quantity_label(c.quantity)) : name;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

// Round step from {1, 2, 5} x 10^k giving at most ~6 ticks over `span`.
double nice_step(double span) {
  const double raw = span / 6.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) return m * mag;
  return 10.0 * mag;
}

}  // namespace

void write_curves_csv(std::ostream& out, std::span<const CurveTable> curves) {
  csv::write_row(out, {"stratum", "profile", "quantity", "conditioning_age", "age", "estimate", "lo95", "hi95",
                       "extrapolated"});
  for (const auto& c : curves) {
    if (c.estimate.size() > c.ages.size() || c.lo95.size() != c.estimate.size() || c.hi95.size() != c.estimate.size())
      throw ConfigError("curve columns have inconsistent lengths");
    for (std::size_t i = 0; i < c.estimate.size(); ++i) {
      const bool extra = c.extrapolation_age > 0.0 && c.ages[i] > c.extrapolation_age;
      csv::write_row(out, {c.stratum, profile_label(c.profile), std::string(quantity_label(c.quantity)),
                           csv::format_number(c.conditioning_age), csv::format_number(c.ages[i]),
                           csv::format_number(c.estimate[i]), csv::format_number(c.lo95[i]),
                           csv::format_number(c.hi95[i]), extra ? "1" : "0"});
    }
  }
}

std::vector<CurveTable> parse_curves_csv(std::string_view text) {
  const auto t = csv::parse(text);
  const char* required[] = {"stratum", "profile", "quantity", "conditioning_age", "age", "estimate", "lo95", "hi95"};
  std::map<std::string, std::size_t> col;
  for (const char* name : required) {
    const auto c = t.column(name);
    if (!c) throw ConfigError(fmt::format("curve CSV lacks column '{}'", name));
    col[name] = *c;
  }
  const auto ext = t.column("extrapolated");
  std::vector<CurveTable> out;
  std::map<std::string, std::size_t> index;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const int line = t.lines[r];
    const std::string key = row[col["stratum"]] + '\x1f' + row[col["profile"]] + '\x1f' + row[col["quantity"]];
    auto [it, fresh] = index.emplace(key, out.size());
    if (fresh) {
      CurveTable c;
      c.stratum = row[col["stratum"]];
      c.profile = parse_profile(row[col["profile"]], line);
      c.quantity = parse_quantity(row[col["quantity"]]);
      c.conditioning_age = number(row[col["conditioning_age"]], line, "conditioning_age");
      out.push_back(std::move(c));
    }
    auto& c = out[it->second];
    const double age = number(row[col["age"]], line, "age");
    if (!c.ages.empty() && age < c.ages.back())
      throw ConfigError(fmt::format("line {}: ages must be nondecreasing within a curve", line));
    c.ages.push_back(age);
    c.estimate.push_back(number(row[col["estimate"]], line, "estimate"));
    c.lo95.push_back(number(row[col["lo95"]], line, "lo95"));
    c.hi95.push_back(number(row[col["hi95"]], line, "hi95"));
    if (ext && row[*ext] == "1") c.extrapolated = true;
  }
  return out;
}

std::vector<CurveTable> read_curves_csv(const std::string& path) {
  try {
    return parse_curves_csv(csv::read_text(path));
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", path, e.what()));
  }
}

void write_conditional_csv(std::ostream& out, std::span<const ConditionalTable> tables) {
  if (tables.empty()) return;
  std::vector<std::string> header = {"stratum", "profile", "age"};
  for (const auto& h : tables.front().horizons) {
    header.push_back(h.label());
    header.push_back(h.label() + "_lo95");
    header.push_back(h.label() + "_hi95");
  }
  csv::write_row(out, header);
  auto cell = [](const std::optional<double>& v) { return v ? fmt::format("{:.4f}", *v) : std::string(); };
  for (const auto& t : tables) {
    if (t.horizons.size() != tables.front().horizons.size())
      throw ConfigError("conditional tables in one file must share their horizons");
    for (std::size_t i = 0; i < t.ages.size(); ++i) {
      std::vector<std::string> row = {t.stratum, profile_label(t.profile), csv::format_number(t.ages[i])};
      for (std::size_t h = 0; h < t.horizons.size(); ++h) {
        row.push_back(cell(t.estimate[i][h]));
        row.push_back(cell(t.lo95[i][h]));
        row.push_back(cell(t.hi95[i][h]));
      }
      csv::write_row(out, row);
    }
  }
}

std::string render_svg(std::span<const CurveTable> curves, const PlotOptions& options) {
  if (curves.empty()) throw ConfigError("nothing to plot: no curves");
  double x0 = INFINITY, x1 = -INFINITY, y1 = 0.0;
  for (const auto& c : curves) {
    if (c.estimate.empty()) throw ConfigError(fmt::format("curve '{}' has no points", curve_name(c)));
    x0 = std::min(x0, c.ages.front());
    x1 = std::max(x1, c.ages[c.estimate.size() - 1]);
    for (std::size_t i = 0; i < c.estimate.size(); ++i) y1 = std::max({y1, c.estimate[i], c.hi95[i]});
  }
  if (x1 <= x0) x1 = x0 + 1.0;
  if (options.y_max > 0.0) {
    y1 = options.y_max;
  } else {
    y1 = y1 <= 0.0 ? 1.0 : std::min(1.0, nice_step(y1 * 1.05) * std::ceil(y1 * 1.05 / nice_step(y1 * 1.05)));
  }

  const double W = options.width, H = options.height;
  const double left = 64, right = 170, top = 40, bottom = 52;
  const double pw = W - left - right, ph = H - top - bottom;
  auto X = [&](double a) { return left + (a - x0) / (x1 - x0) * pw; };
  auto Y = [&](double p) { return top + ph - std::clamp(p / y1, 0.0, 1.0) * ph; };

  std::ostringstream s;
  s << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="12">)",
                   options.width, options.height, options.width, options.height)
    << "\n";
  s << fmt::format(R"(<rect x="0" y="0" width="{}" height="{}" fill="#ffffff"/>)", options.width, options.height) << "\n";
  const std::string title = options.title.empty() ? std::string(quantity_label(curves.front().quantity)) : options.title;
  s << fmt::format(R"(<text x="{:.2f}" y="22" text-anchor="middle" font-size="14">{}</text>)", left + pw / 2,
                   xml_escape(title))
    << "\n";

  // Axes and ticks.
  s << "<g stroke=\"#333333\" stroke-width=\"1\">\n";
  s << fmt::format(R"(<line x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}"/>)", left, top + ph, left + pw, top + ph) << "\n";
  s << fmt::format(R"(<line x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}"/>)", left, top, left, top + ph) << "\n";
  s << "</g>\n<g fill=\"#333333\">\n";
  const double xs = nice_step(x1 - x0);
  for (double a = std::ceil(x0 / xs) * xs; a <= x1 + 1e-9; a += xs) {
    s << fmt::format(R"(<line x1="{0:.2f}" y1="{1:.2f}" x2="{0:.2f}" y2="{2:.2f}" stroke="#333333"/>)", X(a), top + ph,
                     top + ph + 5)
      << "\n";
    s << fmt::format(R"(<text x="{:.2f}" y="{:.2f}" text-anchor="middle">{:g}</text>)", X(a), top + ph + 19, a) << "\n";
  }
  const double ys = nice_step(y1);
  for (double p = 0.0; p <= y1 + 1e-12; p += ys) {
    s << fmt::format(R"(<line x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}" stroke="#dddddd"/>)", left, Y(p), left + pw,
                     Y(p))
      << "\n";
    s << fmt::format(R"(<text x="{:.2f}" y="{:.2f}" text-anchor="end">{:.2f}</text>)", left - 6, Y(p) + 4, p) << "\n";
  }
  s << fmt::format(R"(<text x="{:.2f}" y="{:.2f}" text-anchor="middle">age (years)</text>)", left + pw / 2, H - 12) << "\n";
  s << fmt::format(R"svg(<text x="16" y="{:.2f}" text-anchor="middle" transform="rotate(-90 16 {:.2f})">{}</text>)svg",
                   top + ph / 2, top + ph / 2, xml_escape(quantity_label(curves.front().quantity)))
    << "\n";
  s << "</g>\n";

  for (std::size_t k = 0; k < curves.size(); ++k) {
    const auto& c = curves[k];
    const char* color = kPalette[k % std::size(kPalette)];
    const std::size_t n = c.estimate.size();
    std::string band, line;
    for (std::size_t i = 0; i < n; ++i) band += fmt::format("{:.2f},{:.2f} ", X(c.ages[i]), Y(c.hi95[i]));
    for (std::size_t i = n; i-- > 0;) band += fmt::format("{:.2f},{:.2f} ", X(c.ages[i]), Y(c.lo95[i]));
    for (std::size_t i = 0; i < n; ++i) line += fmt::format("{:.2f},{:.2f} ", X(c.ages[i]), Y(c.estimate[i]));
    band.pop_back();
    line.pop_back();
    s << fmt::format(R"(<g class="stratum" data-name="{}">)", xml_escape(curve_name(c))) << "\n";
    s << fmt::format(R"(<polygon class="band" points="{}" fill="{}" fill-opacity="0.2" stroke="none"/>)", band, color)
      << "\n";
    s << fmt::format(R"(<polyline class="estimate" points="{}" fill="none" stroke="{}" stroke-width="2"/>)", line, color)
      << "\n";
    const double ly = top + 14 + 20.0 * k;
    s << fmt::format(R"(<line x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}" stroke="{}" stroke-width="2"/>)",
                     left + pw + 14, ly, left + pw + 38, ly, color)
      << "\n";
    s << fmt::format(R"(<text x="{:.2f}" y="{:.2f}">{}</text>)", left + pw + 44, ly + 4, xml_escape(curve_name(c)))
      << "\n";
    s << "</g>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace idm
