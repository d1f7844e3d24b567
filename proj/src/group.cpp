#include "loadgan/group.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <algorithm>
#include <iomanip>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

#include "loadgan/io_util.hpp"

namespace loadgan {

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::real: return "real";
        case Provenance::generated: return "generated";
        case Provenance::random_assembled: return "random-assembled";
        case Provenance::nsg_negative: return "nsg-negative";
    }
    return "?";
}

Provenance provenance_from_string(const std::string& s) {
    for (auto p : {Provenance::real, Provenance::generated, Provenance::random_assembled, Provenance::nsg_negative})
        if (to_string(p) == s) return p;
    throw std::invalid_argument("unknown provenance '" + s + "'");
}

std::string to_string(LabelState s) {
    switch (s) {
        case LabelState::positive: return "positive";
        case LabelState::negative: return "negative";
        case LabelState::unlabeled: return "unlabeled";
    }
    return "?";
}

LabelState label_state_from_string(const std::string& s) {
    for (auto l : {LabelState::positive, LabelState::negative, LabelState::unlabeled})
        if (to_string(l) == s) return l;
    throw std::invalid_argument("unknown label '" + s + "'");
}

std::vector<double> LoadGroup::column(std::size_t n) const {
    std::vector<double> c(steps);
    for (std::size_t m = 0; m < steps; ++m) c[m] = at(m, n);
    return c;
}

std::vector<double> LoadGroup::aggregate() const {
    std::vector<double> s(steps, 0.0);
    for (std::size_t m = 0; m < steps; ++m)
        for (std::size_t n = 0; n < households; ++n) s[m] += at(m, n);
    return s;
}

void LoadGroup::validate() const {
    if (kw.size() != steps * households || temperature.size() != steps) {
        throw std::invalid_argument("load group '" + id + "': inconsistent dimensions");
    }
}

LoadGroup canonical_columns(const LoadGroup& g) {
    g.validate();
    std::vector<double> means(g.households, 0.0);
    for (std::size_t m = 0; m < g.steps; ++m)
        for (std::size_t n = 0; n < g.households; ++n) means[n] += g.at(m, n);
    std::vector<std::size_t> order(g.households);
    for (std::size_t n = 0; n < order.size(); ++n) order[n] = n;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return means[a] > means[b]; });
    LoadGroup out = g;
    for (std::size_t m = 0; m < g.steps; ++m)
        for (std::size_t n = 0; n < g.households; ++n) out.at(m, n) = g.at(m, order[n]);
    return out;
}

void SampleSet::add(LoadGroup g, Label l) {
    groups.push_back(std::move(g));
    labels.push_back(l);
}

void SampleSet::append(const SampleSet& other) {
    groups.insert(groups.end(), other.groups.begin(), other.groups.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
}

void SampleSet::validate() const {
    if (labels.size() != groups.size()) throw std::invalid_argument("sample set: label count differs from group count");
    for (std::size_t i = 0; i < groups.size(); ++i) {
        groups[i].validate();
        if (groups[i].steps != groups[0].steps || groups[i].households != groups[0].households) {
            throw std::invalid_argument("sample set: mixed shapes (group " + std::to_string(i) + ")");
        }
        if (labels[i].confidence && (*labels[i].confidence < 0.0 || *labels[i].confidence > 1.0)) {
            throw std::invalid_argument("sample set: confidence outside [0, 1]");
        }
    }
}

namespace {
constexpr char group_magic[4] = {'L', 'G', 'G', 'R'};
constexpr std::uint32_t group_version = 1;
}  // namespace

void write_group_file(const std::filesystem::path& path, const LoadGroup& g) {
    g.validate();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os.write(group_magic, 4);
    io::put<std::uint32_t>(os, group_version);
    io::put<std::uint64_t>(os, g.steps);
    io::put<std::uint64_t>(os, g.households);
    io::put<std::int64_t>(os, g.week_start);
    io::put<std::int64_t>(os, g.cadence_minutes);
    io::put<std::uint8_t>(os, static_cast<std::uint8_t>(g.provenance));
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(g.id.size()));
    os.write(g.id.data(), static_cast<std::streamsize>(g.id.size()));
    for (double v : g.kw) io::put<double>(os, v);
    for (double v : g.temperature) io::put<double>(os, v);
    if (!os) throw std::runtime_error("failed writing " + path.string());
}

LoadGroup read_group_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    char m[4];
    is.read(m, 4);
    if (!is || std::memcmp(m, group_magic, 4) != 0) throw std::runtime_error(path.string() + ": not a group file");
    const std::string where = path.string();
    if (io::get<std::uint32_t>(is, where) != group_version) throw std::runtime_error(where + ": unsupported version");
    const auto steps = io::get<std::uint64_t>(is, where);
    const auto households = io::get<std::uint64_t>(is, where);
    if (steps == 0 || households == 0 || steps * households > (1ull << 28)) {
        throw std::runtime_error(where + ": implausible dimensions");
    }
    LoadGroup g(steps, households);
    g.week_start = io::get<std::int64_t>(is, where);
    g.cadence_minutes = io::get<std::int64_t>(is, where);
    const auto prov = io::get<std::uint8_t>(is, where);
    if (prov > 3) throw std::runtime_error(where + ": bad provenance tag");
    g.provenance = static_cast<Provenance>(prov);
    const auto id_len = io::get<std::uint32_t>(is, where);
    if (id_len > 4096) throw std::runtime_error(where + ": bad id length");
    g.id.resize(id_len);
    is.read(g.id.data(), id_len);
    for (auto& v : g.kw) v = io::get<double>(is, where);
    for (auto& v : g.temperature) v = io::get<double>(is, where);
    return g;
}

void save_sample_set(const std::filesystem::path& dir, const SampleSet& set) {
    set.validate();
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["format"] = "loadgan-sampleset";
    manifest["version"] = 1;
    manifest["metadata"] = set.metadata;
    auto& items = manifest["groups"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < set.size(); ++i) {
        std::ostringstream name;
        name << "group_" << std::setw(6) << std::setfill('0') << i << ".bin";
        write_group_file(dir / name.str(), set.groups[i]);
        nlohmann::ordered_json item;
        item["file"] = name.str();
        item["id"] = set.groups[i].id;
        item["provenance"] = to_string(set.groups[i].provenance);
        item["label"] = to_string(set.labels[i].state);
        if (set.labels[i].confidence) {
            item["confidence"] = *set.labels[i].confidence;
        } else {
            item["confidence"] = nullptr;
        }
        items.push_back(std::move(item));
    }
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write manifest in " + dir.string());
    os << manifest.dump(2) << '\n';
}

SampleSet load_sample_set(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw std::runtime_error("no sample set manifest in " + dir.string());
    const auto manifest = nlohmann::json::parse(is);
    if (manifest.value("format", "") != "loadgan-sampleset") {
        throw std::runtime_error(dir.string() + ": manifest is not a sample set");
    }
    SampleSet set;
    if (manifest.contains("metadata")) {
        for (auto& [k, v] : manifest["metadata"].items()) set.metadata[k] = v.get<std::string>();
    }
    for (const auto& item : manifest.at("groups")) {
        LoadGroup g = read_group_file(dir / item.at("file").get<std::string>());
        Label l;
        l.state = label_state_from_string(item.at("label").get<std::string>());
        if (item.contains("confidence") && !item["confidence"].is_null()) l.confidence = item["confidence"].get<double>();
        set.add(std::move(g), l);
    }
    set.validate();
    return set;
}

}  // namespace loadgan
