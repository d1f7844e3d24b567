#include "loadgan/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace loadgan::stats {

std::string to_string(Level l) { return l == Level::household ? "household" : "transformer"; }

std::string to_string(IndexKind k) {
    switch (k) {
        case IndexKind::peak: return "peak";
        case IndexKind::mean: return "mean";
        case IndexKind::ramp: return "ramp";
        case IndexKind::hourly: return "hourly";
        case IndexKind::daily: return "daily";
    }
    return "?";
}

void IndexConfig::validate() const {
    if (periods.empty()) throw std::invalid_argument("index config: no day periods");
    for (const auto& p : periods) {
        if (!(0.0 <= p.from_hour && p.from_hour < p.to_hour && p.to_hour <= 24.0)) {
            throw std::invalid_argument("index config: bad day period");
        }
    }
    if (day_classes.empty() || day_classes.size() != day_class_names.size()) {
        throw std::invalid_argument("index config: day classes and names differ in length");
    }
    for (const auto& c : day_classes)
        for (int d : c)
            if (d < 0 || d > 6) throw std::invalid_argument("index config: weekday outside 0..6");
}

double peak(std::span<const double> p) {
    if (p.empty()) throw std::invalid_argument("peak: empty profile");
    return *std::max_element(p.begin(), p.end());
}

double mean(std::span<const double> p) {
    if (p.empty()) throw std::invalid_argument("mean: empty profile");
    double s = 0.0;
    for (double x : p) s += x;
    return s / static_cast<double>(p.size());
}

std::vector<double> ramps(std::span<const double> p) {
    std::vector<double> r;
    for (std::size_t i = 1; i < p.size(); ++i) r.push_back(p[i] - p[i - 1]);
    return r;
}

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

}  // namespace

std::vector<DayEnergy> day_energies(std::span<const double> profile, std::int64_t start, std::int64_t cadence,
                                    const std::vector<DayPeriod>& periods) {
    if (cadence <= 0) throw std::invalid_argument("day_energies: cadence must be positive");
    std::vector<DayEnergy> days;
    for (std::size_t m = 0; m < profile.size(); ++m) {
        const std::int64_t a = start + static_cast<std::int64_t>(m) * cadence;
        const std::int64_t b = a + cadence;
        for (std::int64_t day = floor_div(a, 1440); day * 1440 < b; ++day) {
            if (days.empty() || days.back().day != day) {
                days.push_back({day, static_cast<int>(((day + 3) % 7 + 7) % 7), std::vector<double>(periods.size(), 0.0), 0.0});
            }
            auto& d = days.back();
            for (std::size_t k = 0; k < periods.size(); ++k) {
                const double lo = static_cast<double>(day * 1440) + periods[k].from_hour * 60.0;
                const double hi = static_cast<double>(day * 1440) + periods[k].to_hour * 60.0;
                const double overlap = std::min(hi, static_cast<double>(b)) - std::max(lo, static_cast<double>(a));
                if (overlap > 0.0) d.period_kwh[k] += profile[m] * overlap / 60.0;
            }
        }
    }
    for (auto& d : days) {
        d.total_kwh = 0.0;
        for (double e : d.period_kwh) d.total_kwh += e;
    }
    return days;
}

std::vector<IndexDistribution> compute_indices(const SampleSet& samples, Level level, const IndexConfig& config) {
    if (samples.empty()) throw std::invalid_argument("compute_indices: empty sample set");
    samples.validate();
    config.validate();
    std::vector<IndexDistribution> out;
    out.push_back({IndexKind::peak, level, 0, "", {}});
    out.push_back({IndexKind::mean, level, 0, "", {}});
    out.push_back({IndexKind::ramp, level, 0, "", {}});
    const std::size_t hourly0 = out.size();
    for (std::size_t k = 0; k < config.periods.size(); ++k) {
        std::ostringstream name;
        name << config.periods[k].from_hour << "-" << config.periods[k].to_hour;
        out.push_back({IndexKind::hourly, level, k, name.str(), {}});
    }
    const std::size_t daily0 = out.size();
    for (std::size_t c = 0; c < config.day_classes.size(); ++c) {
        out.push_back({IndexKind::daily, level, c, config.day_class_names[c], {}});
    }
    auto add_profile = [&](const std::vector<double>& p, const LoadGroup& g) {
        out[0].values.push_back(peak(p));
        out[1].values.push_back(mean(p));
        const auto r = ramps(p);
        out[2].values.insert(out[2].values.end(), r.begin(), r.end());
        for (const auto& d : day_energies(p, g.week_start, g.cadence_minutes, config.periods)) {
            for (std::size_t k = 0; k < d.period_kwh.size(); ++k) out[hourly0 + k].values.push_back(d.period_kwh[k]);
            for (std::size_t c = 0; c < config.day_classes.size(); ++c) {
                const auto& cls = config.day_classes[c];
                if (std::find(cls.begin(), cls.end(), d.weekday) != cls.end()) out[daily0 + c].values.push_back(d.total_kwh);
            }
        }
    };
    for (const auto& g : samples.groups) {
        if (level == Level::household) {
            for (std::size_t n = 0; n < g.households; ++n) add_profile(g.column(n), g);
        } else {
            add_profile(g.aggregate(), g);
        }
    }
    return out;
}

Ratio ratio(double multi_fid, double single_fid) {
    Ratio r;
    if (!(single_fid > 0.0) || !std::isfinite(multi_fid)) return r;
    r.defined = true;
    r.value = multi_fid / single_fid;
    r.favorable = r.value < 1.0;
    return r;
}

namespace {

using json = nlohmann::ordered_json;

json summary_json(const metrics::Summary& s) {
    return json{{"count", s.count}, {"mean", s.mean}, {"std", s.stddev}, {"min", s.min},
                {"q1", s.q1},       {"median", s.median}, {"q3", s.q3}, {"max", s.max}};
}

void put_ratio(json& j, double multi, double single) {
    const auto r = ratio(multi, single);
    if (r.defined) {
        j["ratio"] = r.value;
        j["favorable"] = r.favorable;
    } else {
        j["ratio"] = nullptr;
        j["ratio_status"] = "undefined (single-model distance is zero)";
    }
}

struct SetIndices {
    std::vector<IndexDistribution> household;
    std::vector<IndexDistribution> transformer;
    const std::vector<IndexDistribution>& at(Level l) const { return l == Level::household ? household : transformer; }
};

std::optional<SetIndices> indices_for(const SampleSet* s, const IndexConfig& cfg, json& errors, const char* name) {
    if (!s) return std::nullopt;
    try {
        return SetIndices{compute_indices(*s, Level::household, cfg), compute_indices(*s, Level::transformer, cfg)};
    } catch (const std::exception& e) {
        errors.push_back(std::string(name) + ": " + e.what());
        return std::nullopt;
    }
}

json score_block(const std::vector<double>& scores, const std::vector<double>* reference) {
    json j;
    j["count"] = scores.size();
    try {
        j["por"] = metrics::por(scores);
        j["mcl"] = metrics::mcl(scores);
        if (reference) j["score_fid"] = metrics::frechet_1d(scores, *reference);
    } catch (const std::exception& e) {
        j["error"] = e.what();
    }
    return j;
}

}  // namespace

nlohmann::ordered_json build_report(const ReportInputs& in) {
    if (!in.real) throw std::invalid_argument("build_report: real set is required");
    json report;
    report["metadata"] = in.metadata;
    json errors = json::array();
    report["counts"] = {{"real", in.real->size()},
                        {"multi", in.multi ? json(in.multi->size()) : json(nullptr)},
                        {"single", in.single ? json(in.single->size()) : json(nullptr)}};
    if (in.multi && in.single && in.multi->size() > 0 && in.single->size() > 0 && in.real->size() > 0) {
        const auto& r = in.real->groups[0];
        for (const auto* s : {in.multi, in.single}) {
            if (s->groups[0].steps != r.steps || s->groups[0].households != r.households) {
                errors.push_back("generated set shape differs from the real set");
            }
        }
    }
    const auto real = indices_for(in.real, in.config, errors, "real");
    const auto multi = indices_for(in.multi, in.config, errors, "multi");
    const auto single = indices_for(in.single, in.config, errors, "single");

    json stats_block = json::object();
    for (Level level : {Level::household, Level::transformer}) {
        json lvl = json::object();
        for (IndexKind kind : all_index_kinds) {
            json entry;
            json comps = json::array();
            double sum_multi = 0.0;
            double sum_single = 0.0;
            bool ok = real.has_value();
            if (real) {
                const auto& rd = real->at(level);
                for (std::size_t i = 0; i < rd.size(); ++i) {
                    if (rd[i].kind != kind) continue;
                    json c;
                    if (!rd[i].component_name.empty()) c["component"] = rd[i].component_name;
                    try {
                        c["real"] = summary_json(rd[i].summary());
                        if (multi) {
                            const double f = metrics::frechet_1d(multi->at(level)[i].values, rd[i].values);
                            c["fid_multi"] = f;
                            c["multi"] = summary_json(multi->at(level)[i].summary());
                            sum_multi += f;
                        }
                        if (single) {
                            const double f = metrics::frechet_1d(single->at(level)[i].values, rd[i].values);
                            c["fid_single"] = f;
                            c["single"] = summary_json(single->at(level)[i].summary());
                            sum_single += f;
                        }
                        if (multi && single) put_ratio(c, c["fid_multi"].get<double>(), c["fid_single"].get<double>());
                    } catch (const std::exception& e) {
                        c["error"] = e.what();
                        ok = false;
                    }
                    comps.push_back(std::move(c));
                }
            }
            if (ok) {
                if (multi) entry["fid_multi"] = sum_multi;
                if (single) entry["fid_single"] = sum_single;
                if (multi && single) put_ratio(entry, sum_multi, sum_single);
            } else {
                entry["error"] = "index could not be computed";
            }
            entry["components"] = std::move(comps);
            lvl[to_string(kind)] = std::move(entry);
        }
        stats_block[to_string(level)] = std::move(lvl);
    }
    report["statistics"] = std::move(stats_block);

    json cls;
    if (in.scores) {
        cls["present"] = true;
        cls["threshold"] = 0.5;
        cls["real"] = score_block(in.scores->real, nullptr);
        if (in.multi) cls["multi"] = score_block(in.scores->multi, &in.scores->real);
        if (in.single) cls["single"] = score_block(in.scores->single, &in.scores->real);
    } else {
        cls["present"] = false;
    }
    report["classifier"] = std::move(cls);
    report["errors"] = std::move(errors);
    return report;
}

// ---------------------------------------------------------------------------
// plots

namespace {

struct Panel {
    std::string title;
    std::vector<std::pair<std::string, const std::vector<double>*>> series;
};

const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c"};

void svg_text(std::ostream& os, double x, double y, const std::string& t, const char* anchor = "middle") {
    os << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"" << anchor
       << "\">" << t << "</text>\n";
}

std::pair<double, double> panel_range(const Panel& p) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& [_, v] : p.series)
        for (double x : *v) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
    }
    return {lo, hi};
}

void write_svg(const std::filesystem::path& path, const std::vector<Panel>& panels, bool box) {
    const double pw = 260, ph = 200, margin = 30;
    const double width = pw * static_cast<double>(panels.size()) + margin;
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << ph + 2 * margin << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t pi = 0; pi < panels.size(); ++pi) {
        const auto& p = panels[pi];
        const double x0 = margin + pw * static_cast<double>(pi);
        const double y0 = margin;
        const double w = pw - 20;
        const double h = ph;
        os << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << w << "\" height=\"" << h
           << "\" fill=\"none\" stroke=\"#888\"/>\n";
        svg_text(os, x0 + w / 2, y0 - 8, p.title);
        const auto [lo, hi] = panel_range(p);
        if (!box) {
            const std::size_t bins = 40;
            std::vector<std::vector<double>> dens;
            double peak_density = 0.0;
            for (const auto& [_, v] : p.series) {
                std::vector<double> d(bins, 0.0);
                for (double x : *v) {
                    auto b = static_cast<std::size_t>((x - lo) / (hi - lo) * bins);
                    d[std::min(b, bins - 1)] += 1.0 / static_cast<double>(v->size());
                }
                peak_density = std::max(peak_density, *std::max_element(d.begin(), d.end()));
                dens.push_back(std::move(d));
            }
            for (std::size_t s = 0; s < dens.size(); ++s) {
                os << "<polyline fill=\"none\" stroke=\"" << colors[s % 3] << "\" points=\"";
                for (std::size_t b = 0; b < bins; ++b) {
                    const double x = x0 + w * (static_cast<double>(b) + 0.5) / bins;
                    const double y = y0 + h - h * dens[s][b] / (peak_density > 0 ? peak_density : 1.0);
                    os << x << "," << y << " ";
                }
                os << "\"/>\n";
            }
            svg_text(os, x0, y0 + h + 14, std::to_string(lo).substr(0, 6), "start");
            svg_text(os, x0 + w, y0 + h + 14, std::to_string(hi).substr(0, 6), "end");
        } else {
            const double slot = w / static_cast<double>(p.series.size());
            auto ymap = [&, lo = lo, hi = hi](double v) { return y0 + h - h * (v - lo) / (hi - lo); };
            for (std::size_t s = 0; s < p.series.size(); ++s) {
                const auto sm = metrics::summarize(*p.series[s].second);
                const double cx = x0 + slot * (static_cast<double>(s) + 0.5);
                const char* c = colors[s % 3];
                os << "<line x1=\"" << cx << "\" x2=\"" << cx << "\" y1=\"" << ymap(sm.min) << "\" y2=\"" << ymap(sm.max)
                   << "\" stroke=\"" << c << "\"/>\n";
                os << "<rect x=\"" << cx - slot / 4 << "\" y=\"" << ymap(sm.q3) << "\" width=\"" << slot / 2
                   << "\" height=\"" << std::max(0.5, ymap(sm.q1) - ymap(sm.q3)) << "\" fill=\"white\" stroke=\"" << c
                   << "\"/>\n";
                os << "<line x1=\"" << cx - slot / 4 << "\" x2=\"" << cx + slot / 4 << "\" y1=\"" << ymap(sm.median)
                   << "\" y2=\"" << ymap(sm.median) << "\" stroke=\"" << c << "\"/>\n";
            }
        }
        for (std::size_t s = 0; s < p.series.size(); ++s) {
            const double lx = box ? x0 + (w / static_cast<double>(p.series.size())) * (static_cast<double>(s) + 0.5)
                                  : x0 + 30 + 60 * static_cast<double>(s);
            os << "<text x=\"" << lx << "\" y=\"" << y0 + h + 28 << "\" font-size=\"10\" font-family=\"sans-serif\" fill=\""
               << colors[s % 3] << "\" text-anchor=\"middle\">" << p.series[s].first << "</text>\n";
        }
    }
    os << "</svg>\n";
}

}  // namespace

void write_plots(const std::filesystem::path& dir, const ReportInputs& in) {
    if (!in.real) throw std::invalid_argument("write_plots: real set is required");
    std::filesystem::create_directories(dir);
    for (Level level : {Level::household, Level::transformer}) {
        const auto real = compute_indices(*in.real, level, in.config);
        std::optional<std::vector<IndexDistribution>> multi, single;
        if (in.multi && !in.multi->empty()) multi = compute_indices(*in.multi, level, in.config);
        if (in.single && !in.single->empty()) single = compute_indices(*in.single, level, in.config);
        for (IndexKind kind : all_index_kinds) {
            std::vector<Panel> panels;
            for (std::size_t i = 0; i < real.size(); ++i) {
                if (real[i].kind != kind) continue;
                Panel p;
                p.title = to_string(kind) + (real[i].component_name.empty() ? "" : " " + real[i].component_name);
                p.series.emplace_back("real", &real[i].values);
                if (multi) p.series.emplace_back("multi", &(*multi)[i].values);
                if (single) p.series.emplace_back("single", &(*single)[i].values);
                panels.push_back(std::move(p));
            }
            const std::string stem = to_string(kind) + "_" + to_string(level);
            write_svg(dir / (stem + "_curve.svg"), panels, false);
            write_svg(dir / (stem + "_box.svg"), panels, true);
        }
    }
}

}  // namespace loadgan::stats
