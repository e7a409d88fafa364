#include "hcil/feature_store.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string_view>

#include "hcil/error.hpp"
#include "hcil/log.hpp"
#include "hcil/rng.hpp"

namespace hcil {

namespace {

constexpr char kMagic[4] = {'H', 'C', 'F', '1'};
constexpr std::uint32_t kBinaryVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 8;
constexpr std::size_t kRecordPrefixBytes = 8 + 8 + 2 + 2;

static_assert(std::numeric_limits<float>::is_iec559, "binary format requires IEEE-754 floats");

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
    using U = std::make_unsigned_t<T>;
    auto bits = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<unsigned char>(bits & 0xFFu));
        bits = static_cast<U>(bits >> 8);
    }
}

template <typename T>
T get_le(const unsigned char* p) {
    std::make_unsigned_t<T> bits = 0;
    for (std::size_t i = sizeof(T); i > 0; --i) {
        bits = static_cast<std::make_unsigned_t<T>>((bits << 8) | p[i - 1]);
    }
    return static_cast<T>(bits);
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            cells.push_back(line.substr(start));
            return cells;
        }
        cells.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
    text = trim(text);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, out);
    return ec == std::errc() && ptr == end && !text.empty();
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(std::shared_ptr<const Taxonomy> taxonomy, std::size_t dimension,
                 std::vector<FeatureRecord> records)
    : taxonomy_(std::move(taxonomy)), dimension_(dimension), records_(std::move(records)) {
    if (!taxonomy_) {
        throw TaxonomyError("dataset requires a taxonomy");
    }
    if (dimension_ == 0) {
        throw ValidationError("feature dimension must be positive");
    }
    std::set<RecordKey> keys;
    std::map<std::uint64_t, SpeciesId> track_species;
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& r = records_[i];
        const std::string where = "record " + std::to_string(i);
        if (r.feature.size() != dimension_) {
            throw CorruptionError(where + " has " + std::to_string(r.feature.size()) +
                                  " values, expected " + std::to_string(dimension_));
        }
        if (!taxonomy_->has_species(r.species_id)) {
            throw TaxonomyError(where + ": species " + std::to_string(r.species_id) +
                                " is not in the taxonomy");
        }
        if (taxonomy_->parent(r.species_id) != r.group_id) {
            throw TaxonomyError(where + ": species " + std::to_string(r.species_id) +
                                " does not belong to group " + std::to_string(r.group_id));
        }
        for (float v : r.feature) {
            if (!std::isfinite(v)) {
                throw ValidationError(where + " has a non-finite feature value");
            }
        }
        if (!keys.insert(r.key()).second) {
            throw ValidationError(where + ": duplicate frame (fish " + std::to_string(r.fish_id) +
                                  ", frame " + std::to_string(r.frame_id) + ")");
        }
        const auto [it, inserted] = track_species.emplace(r.fish_id, r.species_id);
        if (!inserted && it->second != r.species_id) {
            throw ValidationError(where + ": fish " + std::to_string(r.fish_id) +
                                  " is labeled with two species");
        }
    }
}

std::set<SpeciesId> Dataset::species() const {
    std::set<SpeciesId> out;
    for (const auto& r : records_) out.insert(r.species_id);
    return out;
}

std::set<GroupId> Dataset::groups() const {
    std::set<GroupId> out;
    for (const auto& r : records_) out.insert(r.group_id);
    return out;
}

// ---------------------------------------------------------------------------
// TaskStream

void TaskStream::validate() const {
    if (!taxonomy) {
        throw ValidationError("task stream has no taxonomy");
    }
    if (tasks.empty()) {
        throw ValidationError("task stream has no tasks");
    }
    std::set<SpeciesId> seen;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        if (tasks[t].dimension() != tasks.front().dimension()) {
            throw ValidationError("task " + std::to_string(t + 1) + " has dimension " +
                                  std::to_string(tasks[t].dimension()) + ", expected " +
                                  std::to_string(tasks.front().dimension()));
        }
        if (!(tasks[t].taxonomy() == *taxonomy)) {
            throw ValidationError("task " + std::to_string(t + 1) + " uses a different taxonomy");
        }
        for (SpeciesId s : tasks[t].species()) {
            if (!seen.insert(s).second) {
                throw ValidationError("species " + std::to_string(s) + " appears in more than one task");
            }
        }
    }
}

std::vector<int> TaskStream::cohort_of_species() const {
    std::vector<int> cohort(taxonomy ? taxonomy->species_count() : 0, -1);
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        for (SpeciesId s : tasks[t].species()) {
            if (cohort[s] < 0) cohort[s] = static_cast<int>(t);
        }
    }
    return cohort;
}

Dataset TaskStream::concatenated() const {
    std::vector<FeatureRecord> all;
    for (const auto& task : tasks) {
        all.insert(all.end(), task.records().begin(), task.records().end());
    }
    return Dataset(taxonomy, tasks.at(0).dimension(), std::move(all));
}

// ---------------------------------------------------------------------------
// Binary format

void save_binary(const Dataset& dataset, const std::filesystem::path& path) {
    const std::size_t d = dataset.dimension();
    std::vector<unsigned char> bytes;
    bytes.reserve(kHeaderBytes + dataset.size() * (kRecordPrefixBytes + 4 * d));
    bytes.insert(bytes.end(), std::begin(kMagic), std::end(kMagic));
    put_le<std::uint32_t>(bytes, kBinaryVersion);
    put_le<std::uint32_t>(bytes, static_cast<std::uint32_t>(d));
    put_le<std::uint64_t>(bytes, dataset.size());
    for (const auto& r : dataset.records()) {
        put_le<std::uint64_t>(bytes, r.fish_id);
        put_le<std::uint64_t>(bytes, r.frame_id);
        put_le<std::uint16_t>(bytes, r.group_id);
        put_le<std::uint16_t>(bytes, r.species_id);
        for (float v : r.feature) {
            put_le<std::uint32_t>(bytes, std::bit_cast<std::uint32_t>(v));
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

Dataset load_binary(const std::filesystem::path& path, std::shared_ptr<const Taxonomy> taxonomy) {
    const auto bytes = read_file(path);
    const std::string name = path.string();
    if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError(name + ": missing HCF1 header");
    }
    const auto version = get_le<std::uint32_t>(bytes.data() + 4);
    if (version != kBinaryVersion) {
        throw FormatError(name + ": unsupported version " + std::to_string(version));
    }
    const auto d = get_le<std::uint32_t>(bytes.data() + 8);
    const auto count = get_le<std::uint64_t>(bytes.data() + 12);
    if (d == 0) {
        throw FormatError(name + ": header declares dimension 0");
    }
    const std::uint64_t record_bytes = kRecordPrefixBytes + 4ull * d;
    const std::uint64_t payload = bytes.size() - kHeaderBytes;
    if (count > payload / record_bytes || payload != count * record_bytes) {
        throw CorruptionError(name + ": header declares " + std::to_string(count) +
                              " records of dimension " + std::to_string(d) + " but payload is " +
                              std::to_string(payload) + " bytes");
    }

    std::vector<FeatureRecord> records(count);
    const unsigned char* p = bytes.data() + kHeaderBytes;
    for (auto& r : records) {
        r.fish_id = get_le<std::uint64_t>(p);
        r.frame_id = get_le<std::uint64_t>(p + 8);
        r.group_id = get_le<std::uint16_t>(p + 16);
        r.species_id = get_le<std::uint16_t>(p + 18);
        p += kRecordPrefixBytes;
        r.feature.resize(d);
        for (auto& v : r.feature) {
            v = std::bit_cast<float>(get_le<std::uint32_t>(p));
            p += 4;
        }
    }
    if (count == 0) {
        logger().warn("{}: file holds no records", name);
    }
    return Dataset(std::move(taxonomy), d, std::move(records));
}

std::filesystem::path taxonomy_sidecar_for(const std::filesystem::path& feature_file) {
    auto specific = feature_file;
    specific += ".taxonomy.json";
    if (std::filesystem::exists(specific)) {
        return specific;
    }
    return feature_file.parent_path() / "taxonomy.json";
}

Dataset load_binary(const std::filesystem::path& path) {
    const auto sidecar = taxonomy_sidecar_for(path);
    if (!std::filesystem::exists(sidecar)) {
        throw TaxonomyError("no taxonomy sidecar found for " + path.string());
    }
    return load_binary(path, std::make_shared<const Taxonomy>(Taxonomy::load(sidecar)));
}

// ---------------------------------------------------------------------------
// CSV format

void save_csv(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << "fish_id,frame_id,group_id,species_id";
    for (std::size_t i = 0; i < dataset.dimension(); ++i) {
        out << ",f" << i;
    }
    out << '\n';
    char buf[64];
    for (const auto& r : dataset.records()) {
        out << r.fish_id << ',' << r.frame_id << ',' << r.group_id << ',' << r.species_id;
        for (float v : r.feature) {
            const auto res = std::to_chars(buf, buf + sizeof buf, v);
            out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
        }
        out << '\n';
    }
}

Dataset load_csv(const std::filesystem::path& path, std::shared_ptr<const Taxonomy> taxonomy) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    const std::string name = path.string();
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError(name + ": empty CSV, header row expected");
    }

    const auto header = split_commas(line);
    std::map<std::string, std::size_t> columns;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (!columns.emplace(std::string(trim(header[i])), i).second) {
            throw FormatError(name + ": repeated column '" + std::string(trim(header[i])) + "'");
        }
    }
    auto column = [&](const std::string& col) {
        const auto it = columns.find(col);
        if (it == columns.end()) {
            throw FormatError(name + ": missing column '" + col + "'");
        }
        return it->second;
    };
    const std::size_t fish_col = column("fish_id");
    const std::size_t frame_col = column("frame_id");
    const std::size_t group_col = column("group_id");
    const std::size_t species_col = column("species_id");
    const std::size_t d = header.size() - 4;
    std::vector<std::size_t> feature_cols(d);
    for (std::size_t i = 0; i < d; ++i) {
        feature_cols[i] = column("f" + std::to_string(i));
    }
    if (d == 0) {
        throw FormatError(name + ": no feature columns");
    }

    std::vector<FeatureRecord> records;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto cells = split_commas(line);
        const std::string where = name + " row " + std::to_string(row);
        if (cells.size() != header.size()) {
            throw ParseError(where + ": expected " + std::to_string(header.size()) + " cells, found " +
                             std::to_string(cells.size()));
        }
        FeatureRecord r;
        if (!parse_number(cells[fish_col], r.fish_id) || !parse_number(cells[frame_col], r.frame_id) ||
            !parse_number(cells[group_col], r.group_id) ||
            !parse_number(cells[species_col], r.species_id)) {
            throw ParseError(where + ": malformed label cell");
        }
        r.feature.resize(d);
        for (std::size_t i = 0; i < d; ++i) {
            if (!parse_number(cells[feature_cols[i]], r.feature[i])) {
                throw ParseError(where + ": non-numeric value in column f" + std::to_string(i));
            }
        }
        if (!taxonomy->has_species(r.species_id) || taxonomy->parent(r.species_id) != r.group_id) {
            throw TaxonomyError(where + ": species " + std::to_string(r.species_id) +
                                " is not a member of group " + std::to_string(r.group_id) +
                                " in the taxonomy");
        }
        records.push_back(std::move(r));
    }
    return Dataset(std::move(taxonomy), d, std::move(records));
}

// ---------------------------------------------------------------------------
// Task partitioning

TaskStream partition_tasks(const Dataset& dataset, std::size_t num_tasks, std::uint64_t seed) {
    if (num_tasks == 0) {
        throw ValidationError("num_tasks must be at least 1");
    }
    const Taxonomy& taxonomy = dataset.taxonomy();
    const auto present = dataset.species();

    std::vector<std::size_t> task_of_species(taxonomy.species_count(), 0);
    Rng rng(seed);
    bool any_split = false;
    for (const auto& group : taxonomy.groups()) {
        std::vector<SpeciesId> members;
        for (SpeciesId s : taxonomy.species_of(group.id)) {
            if (present.contains(s)) members.push_back(s);
        }
        if (members.size() < num_tasks) {
            continue;  // whole group stays in the first task
        }
        any_split = true;
        rng.shuffle(std::span<SpeciesId>(members));
        for (std::size_t i = 0; i < members.size(); ++i) {
            task_of_species[members[i]] = i % num_tasks;
        }
    }
    if (num_tasks > 1 && !any_split) {
        logger().warn("every group has fewer than {} species; the stream degenerates to a single task",
                      num_tasks);
    }

    std::vector<std::vector<FeatureRecord>> buckets(num_tasks);
    for (const auto& r : dataset.records()) {
        buckets[task_of_species[r.species_id]].push_back(r);
    }
    TaskStream stream;
    stream.taxonomy = dataset.taxonomy_ptr();
    for (auto& bucket : buckets) {
        stream.tasks.emplace_back(dataset.taxonomy_ptr(), dataset.dimension(), std::move(bucket));
    }
    return stream;
}

// ---------------------------------------------------------------------------
// Stream manifest

void save_stream(const TaskStream& stream, const std::filesystem::path& directory) {
    stream.validate();
    std::filesystem::create_directories(directory);
    stream.taxonomy->save(directory / "taxonomy.json");
    nlohmann::json manifest;
    manifest["format"] = "hcil-stream";
    manifest["version"] = 1;
    manifest["taxonomy"] = "taxonomy.json";
    manifest["tasks"] = nlohmann::json::array();
    for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
        const std::string file = "task_" + std::to_string(t + 1) + ".feat";
        save_binary(stream.tasks[t], directory / file);
        const auto species = stream.tasks[t].species();
        manifest["tasks"].push_back({{"file", file},
                                     {"records", stream.tasks[t].size()},
                                     {"species", std::vector<SpeciesId>(species.begin(), species.end())}});
    }
    std::ofstream out(directory / "stream.json", std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write stream manifest in " + directory.string());
    }
    out << manifest.dump(2) << '\n';
}

TaskStream load_stream(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open stream manifest " + manifest_path.string());
    }
    const auto dir = manifest_path.parent_path();
    TaskStream stream;
    try {
        nlohmann::json manifest;
        in >> manifest;
        if (manifest.at("format").get<std::string>() != "hcil-stream") {
            throw FormatError(manifest_path.string() + " is not a stream manifest");
        }
        stream.taxonomy = std::make_shared<const Taxonomy>(
            Taxonomy::load(dir / manifest.at("taxonomy").get<std::string>()));
        for (const auto& task : manifest.at("tasks")) {
            stream.tasks.push_back(load_binary(dir / task.at("file").get<std::string>(), stream.taxonomy));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest_path.string() + ": " + e.what());
    }
    stream.validate();
    return stream;
}

}  // namespace hcil
