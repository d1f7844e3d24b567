#include "loadgan/dataio.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace loadgan::dataio {

namespace {

constexpr std::int64_t minutes_per_day = 1440;
constexpr double nan = std::numeric_limits<double>::quiet_NaN();

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, ',')) out.push_back(trim(cur));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_number(const std::string& s, const std::string& what, std::size_t line) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
        throw std::runtime_error("line " + std::to_string(line) + ": cannot parse " + what + " '" + s + "'");
    }
    return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// time

std::int64_t parse_timestamp(const std::string& text) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    char sep = 0;
    int consumed = 0;
    const std::string t = trim(text);
    const int n = std::sscanf(t.c_str(), "%4d-%2d-%2d%c%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &consumed);
    if (n < 6 || (sep != 'T' && sep != ' ')) throw std::invalid_argument("bad timestamp '" + text + "'");
    std::string rest = t.substr(static_cast<std::size_t>(consumed));
    if (!rest.empty() && rest[0] == ':') {
        int used = 0;
        if (std::sscanf(rest.c_str(), ":%2d%n", &s, &used) != 1) throw std::invalid_argument("bad timestamp '" + text + "'");
        rest = rest.substr(static_cast<std::size_t>(used));
    }
    if (!(rest.empty() || rest == "Z" || rest == "+00:00")) throw std::invalid_argument("unsupported timezone in '" + text + "'");
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 59) throw std::invalid_argument("invalid date/time '" + text + "'");
    if (s != 0) throw std::invalid_argument("timestamp '" + text + "' is not on a whole minute");
    const auto days = std::chrono::sys_days(ymd).time_since_epoch().count();
    return static_cast<std::int64_t>(days) * minutes_per_day + h * 60 + mi;
}

std::string format_timestamp(std::int64_t minutes) {
    const std::int64_t days = floor_div(minutes, minutes_per_day);
    const std::int64_t rem = minutes - days * minutes_per_day;
    const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days}}};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:00Z", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 60),
                  static_cast<int>(rem % 60));
    return buf;
}

int weekday(std::int64_t minutes) {
    // 1970-01-01 was a Thursday.
    const std::int64_t days = floor_div(minutes, minutes_per_day);
    return static_cast<int>(((days + 3) % 7 + 7) % 7);
}

std::int64_t align_to_weekday(std::int64_t minutes, int week_day) {
    const std::int64_t midnight = floor_div(minutes, minutes_per_day) * minutes_per_day;
    const int back = ((weekday(midnight) - week_day) % 7 + 7) % 7;
    return midnight - back * minutes_per_day;
}

long Series::index_of(std::int64_t t) const {
    if (t < start || cadence <= 0) return -1;
    if ((t - start) % cadence != 0) return -1;
    const auto i = (t - start) / cadence;
    return i < static_cast<std::int64_t>(values.size()) ? static_cast<long>(i) : -1;
}

// ---------------------------------------------------------------------------
// ingest

std::vector<MeterSeries> ingest_meters(const std::filesystem::path& path, std::int64_t cadence, IngestReport* report) {
    if (cadence <= 0) throw std::invalid_argument("ingest_meters: cadence must be positive");
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    struct Row {
        std::int64_t t;
        double kw;
        std::size_t line;
    };
    std::map<std::string, std::vector<Row>> rows;
    std::string line;
    std::size_t line_no = 0;
    IngestReport rep;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto f = split_csv(line);
        if (line_no == 1) {
            if (f != std::vector<std::string>{"timestamp", "meter_id", "kw"}) {
                throw std::runtime_error(path.string() + ": expected header 'timestamp,meter_id,kw'");
            }
            continue;
        }
        if (f.size() != 3) throw std::runtime_error(path.string() + " line " + std::to_string(line_no) + ": expected 3 fields");
        std::int64_t t = 0;
        try {
            t = parse_timestamp(f[0]);
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
        if (f[1].empty()) throw std::runtime_error(path.string() + " line " + std::to_string(line_no) + ": empty meter id");
        const double kw = parse_number(f[2], "kW", line_no);
        if (kw < 0.0) throw std::runtime_error(path.string() + " line " + std::to_string(line_no) + ": negative kW");
        rows[f[1]].push_back({t, kw, line_no});
        ++rep.rows;
    }
    std::vector<MeterSeries> out;
    for (auto& [id, r] : rows) {
        std::stable_sort(r.begin(), r.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
        for (std::size_t i = 1; i < r.size(); ++i) {
            if (r[i].t == r[i - 1].t) {
                throw std::runtime_error(path.string() + ": duplicate reading for meter '" + id + "' at " +
                                         format_timestamp(r[i].t) + " (lines " + std::to_string(r[i - 1].line) +
                                         " and " + std::to_string(r[i].line) + ")");
            }
        }
        MeterSeries m;
        m.id = id;
        m.series.start = r.front().t;
        m.series.cadence = cadence;
        m.series.values.assign(static_cast<std::size_t>((r.back().t - r.front().t) / cadence + 1), nan);
        for (const auto& row : r) {
            const long i = m.series.index_of(row.t);
            if (i < 0) {
                ++rep.off_cadence;
                continue;
            }
            m.series.values[static_cast<std::size_t>(i)] = row.kw;
        }
        rep.gaps += static_cast<std::size_t>(
            std::count_if(m.series.values.begin(), m.series.values.end(), [](double v) { return std::isnan(v); }));
        out.push_back(std::move(m));
    }
    if (report) *report = rep;
    return out;
}

Series resample_temperature(const std::vector<std::pair<std::int64_t, double>>& readings_in, std::int64_t cadence,
                            std::size_t max_gap, TemperatureReport* report) {
    if (cadence <= 0) throw std::invalid_argument("resample_temperature: cadence must be positive");
    if (readings_in.empty()) throw std::invalid_argument("resample_temperature: no readings");
    auto readings = readings_in;
    std::stable_sort(readings.begin(), readings.end(), [](auto& a, auto& b) { return a.first < b.first; });
    std::vector<std::int64_t> diffs;
    for (std::size_t i = 1; i < readings.size(); ++i) {
        if (readings[i].first == readings[i - 1].first) {
            throw std::invalid_argument("duplicate temperature reading at " + format_timestamp(readings[i].first));
        }
        diffs.push_back(readings[i].first - readings[i - 1].first);
    }
    std::int64_t source = cadence;
    if (!diffs.empty()) {
        std::nth_element(diffs.begin(), diffs.begin() + static_cast<std::ptrdiff_t>(diffs.size() / 2), diffs.end());
        source = diffs[diffs.size() / 2];
    }
    Series s;
    s.cadence = cadence;
    s.start = floor_div(readings.front().first, cadence) * cadence;
    const std::int64_t end = readings.back().first + std::max(source, cadence);
    const auto n = static_cast<std::size_t>((end - s.start + cadence - 1) / cadence);
    s.values.assign(n, nan);
    std::size_t r = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::int64_t t = s.start + static_cast<std::int64_t>(i) * cadence;
        while (r + 1 < readings.size() && readings[r + 1].first <= t) ++r;
        if (readings[r].first <= t && t - readings[r].first < std::max(source, cadence)) s.values[i] = readings[r].second;
    }
    TemperatureReport rep;
    rep.source_cadence = source;
    for (std::size_t i = 0; i < n;) {
        if (!std::isnan(s.values[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < n && std::isnan(s.values[j])) ++j;
        const std::size_t run = j - i;
        if (i > 0 && j < n && run <= max_gap) {
            const double a = s.values[i - 1];
            const double b = s.values[j];
            for (std::size_t k = i; k < j; ++k) {
                const double frac = static_cast<double>(k - i + 1) / static_cast<double>(run + 1);
                s.values[k] = a + frac * (b - a);
            }
            rep.interpolated += run;
        } else {
            rep.missing += run;
        }
        i = j;
    }
    if (report) *report = rep;
    return s;
}

Series ingest_temperature(const std::filesystem::path& path, std::int64_t cadence, std::size_t max_gap,
                          TemperatureReport* report) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::pair<std::int64_t, double>> readings;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto f = split_csv(line);
        if (line_no == 1) {
            if (f != std::vector<std::string>{"timestamp", "temp_f"}) {
                throw std::runtime_error(path.string() + ": expected header 'timestamp,temp_f'");
            }
            continue;
        }
        if (f.size() != 2) throw std::runtime_error(path.string() + " line " + std::to_string(line_no) + ": expected 2 fields");
        try {
            readings.emplace_back(parse_timestamp(f[0]), parse_number(f[1], "temperature", line_no));
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return resample_temperature(readings, cadence, max_gap, report);
}

void write_meters_csv(const std::filesystem::path& path, const std::vector<MeterSeries>& meters) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "timestamp,meter_id,kw\n";
    char buf[64];
    for (const auto& m : meters) {
        for (std::size_t i = 0; i < m.series.values.size(); ++i) {
            const double v = m.series.values[i];
            if (std::isnan(v)) continue;
            std::snprintf(buf, sizeof buf, "%.17g", v);
            os << format_timestamp(m.series.start + static_cast<std::int64_t>(i) * m.series.cadence) << ',' << m.id << ','
               << buf << '\n';
        }
    }
}

void write_temperature_csv(const std::filesystem::path& path, const Series& temperature) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "timestamp,temp_f\n";
    char buf[64];
    for (std::size_t i = 0; i < temperature.values.size(); ++i) {
        if (std::isnan(temperature.values[i])) continue;
        std::snprintf(buf, sizeof buf, "%.17g", temperature.values[i]);
        os << format_timestamp(temperature.start + static_cast<std::int64_t>(i) * temperature.cadence) << ',' << buf << '\n';
    }
}

// ---------------------------------------------------------------------------
// windowing

namespace {

// Block-averaged window of `steps * factor` native readings starting at t0.
bool extract_window(const Series& s, std::int64_t t0, std::size_t steps, std::size_t factor, double* out,
                    std::size_t out_stride) {
    const long i0 = s.index_of(t0);
    if (i0 < 0) return false;
    const std::size_t len = steps * factor;
    if (static_cast<std::size_t>(i0) + len > s.values.size()) return false;
    for (std::size_t m = 0; m < steps; ++m) {
        double acc = 0.0;
        for (std::size_t k = 0; k < factor; ++k) {
            const double v = s.values[static_cast<std::size_t>(i0) + m * factor + k];
            if (std::isnan(v)) return false;
            acc += v;
        }
        out[m * out_stride] = acc / static_cast<double>(factor);
    }
    return true;
}

struct WindowPlan {
    std::int64_t first;
    std::int64_t last;  // last admissible start
    std::int64_t stride;
    std::int64_t cadence;
};

WindowPlan plan_windows(const std::vector<const Series*>& series, const Series& temperature, const WindowOptions& o) {
    if (o.steps == 0 || o.downsample == 0) throw std::invalid_argument("window: steps and downsample must be positive");
    if (series.empty()) throw std::invalid_argument("window: no series");
    const std::int64_t cadence = series.front()->cadence;
    for (const auto* s : series) {
        if (s->cadence != cadence) throw std::invalid_argument("window: meters have different cadences");
    }
    if (temperature.cadence != cadence) throw std::invalid_argument("window: temperature cadence differs from meter cadence");
    std::int64_t lo = std::numeric_limits<std::int64_t>::max();
    std::int64_t hi = std::numeric_limits<std::int64_t>::min();
    for (const auto* s : series) {
        lo = std::min(lo, s->start);
        hi = std::max(hi, s->end());
    }
    const std::int64_t duration = cadence * static_cast<std::int64_t>(o.steps * o.downsample);
    WindowPlan p;
    p.cadence = cadence;
    p.stride = o.stride_minutes > 0 ? o.stride_minutes : duration;
    p.first = align_to_weekday(lo, o.week_day);
    if (p.first < lo) p.first += 7 * minutes_per_day;
    p.last = hi - duration;
    return p;
}

}  // namespace

SampleSet window_groups(const std::vector<MeterSeries>& meters, const Assignment& assignment, const Series& temperature,
                        const WindowOptions& options, WindowReport* report) {
    std::map<std::string, const MeterSeries*> by_id;
    for (const auto& m : meters) by_id[m.id] = &m;
    SampleSet out;
    WindowReport rep;
    for (const auto& [gid, ids] : assignment) {
        if (ids.size() != options.households) {
            throw std::invalid_argument("group '" + gid + "' has " + std::to_string(ids.size()) + " meters, expected " +
                                        std::to_string(options.households));
        }
        std::vector<const Series*> series;
        for (const auto& id : ids) {
            auto it = by_id.find(id);
            if (it == by_id.end()) throw std::invalid_argument("group '" + gid + "' references unknown meter '" + id + "'");
            series.push_back(&it->second->series);
        }
        const auto plan = plan_windows(series, temperature, options);
        for (std::int64_t t0 = plan.first; t0 <= plan.last; t0 += plan.stride) {
            ++rep.candidates;
            LoadGroup g(options.steps, options.households);
            bool ok = extract_window(temperature, t0, options.steps, options.downsample, g.temperature.data(), 1);
            for (std::size_t n = 0; ok && n < ids.size(); ++n) {
                ok = extract_window(*series[n], t0, options.steps, options.downsample, g.kw.data() + n, options.households);
            }
            if (!ok) {
                ++rep.excluded;
                continue;
            }
            g.id = gid + "@" + format_timestamp(t0).substr(0, 10);
            g.week_start = t0;
            g.cadence_minutes = plan.cadence * static_cast<std::int64_t>(options.downsample);
            g.provenance = Provenance::real;
            out.add(std::move(g), Label{LabelState::positive, std::nullopt});
            ++rep.complete;
        }
    }
    if (report) *report = rep;
    return out;
}

SampleSet profile_pool(const std::vector<MeterSeries>& meters, const Series& temperature, const WindowOptions& options,
                       WindowReport* report) {
    SampleSet out;
    WindowReport rep;
    for (const auto& m : meters) {
        const auto plan = plan_windows({&m.series}, temperature, options);
        for (std::int64_t t0 = plan.first; t0 <= plan.last; t0 += plan.stride) {
            ++rep.candidates;
            LoadGroup g(options.steps, 1);
            if (!extract_window(temperature, t0, options.steps, options.downsample, g.temperature.data(), 1) ||
                !extract_window(m.series, t0, options.steps, options.downsample, g.kw.data(), 1)) {
                ++rep.excluded;
                continue;
            }
            g.id = m.id;
            g.week_start = t0;
            g.cadence_minutes = plan.cadence * static_cast<std::int64_t>(options.downsample);
            out.add(std::move(g), Label{});
            ++rep.complete;
        }
    }
    if (report) *report = rep;
    return out;
}

std::map<std::int64_t, std::vector<std::size_t>> pool_by_week(const SampleSet& pool) {
    std::map<std::int64_t, std::vector<std::size_t>> weeks;
    for (std::size_t i = 0; i < pool.size(); ++i) weeks[pool.groups[i].week_start].push_back(i);
    return weeks;
}

LoadGroup assemble_group(const SampleSet& pool, const std::vector<std::size_t>& members, Provenance provenance,
                         const std::string& id) {
    if (members.empty()) throw std::invalid_argument("assemble_group: no members");
    const auto& first = pool.groups.at(members[0]);
    LoadGroup g(first.steps, members.size());
    for (std::size_t n = 0; n < members.size(); ++n) {
        const auto& p = pool.groups.at(members[n]);
        if (p.households != 1 || p.steps != first.steps || p.week_start != first.week_start) {
            throw std::invalid_argument("assemble_group: members must be one-column profiles from the same week");
        }
        for (std::size_t m = 0; m < g.steps; ++m) g.at(m, n) = p.kw[m];
    }
    g.temperature = first.temperature;
    g.week_start = first.week_start;
    g.cadence_minutes = first.cadence_minutes;
    g.provenance = provenance;
    g.id = id;
    return g;
}

}  // namespace loadgan::dataio
