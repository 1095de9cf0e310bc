#pragma once

#include "kbc/dynamics.hpp"
#include "kbc/field.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <ctime>
#include <set>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace kbc {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

#ifndef KBC_VERSION
#define KBC_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;

// Shortest round-trip decimal form, independent of the C locale.
inline std::string fmt_num(double v)
{
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline std::string fmt_num(double v, int precision)
{
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, precision);
    return std::string(buf, r.ptr);
}

inline std::string hex(const unsigned char* p, std::size_t n)
{
    static const char* d = "0123456789abcdef";
    std::string s(2 * n, '0');
    for (std::size_t i = 0; i < n; ++i) {
        s[2 * i] = d[p[i] >> 4];
        s[2 * i + 1] = d[p[i] & 15];
    }
    return s;
}

inline std::string sha256_hex(const void* data, std::size_t n)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data, n, md, &len, EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 failed");
    return hex(md, len);
}

inline std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }

inline std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& p, const std::string& data)
{
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw std::runtime_error("write failed for " + p.string());
}

inline std::string sha256_file(const fs::path& p) { return sha256_hex(read_file(p)); }

// Snapshot files: <base>.bin holds the Fourier array as interleaved
// little-endian float64 (re, im), row-major over w in {-N..N}^2 (w1 outer,
// both from -N); <base>.json is the sidecar.
struct SnapshotMeta {
    std::uint64_t seed = 0;
    std::uint64_t replica = 0;
    std::string kind = "X"; // X (field) or Z (stochastic convolution)
};

inline std::string snapshot_bytes(const FieldSnapshot& s)
{
    const int N = s.N;
    const Torus T(N);
    if (s.fourier.size() != T.size()) throw std::invalid_argument("snapshot: Fourier array size mismatch");
    std::string out(T.size() * 2 * sizeof(double), '\0');
    char* p = out.data();
    for (int a = -N; a <= N; ++a)
        for (int b = -N; b <= N; ++b) {
            const cplx v = s.fourier[T.index(a, b)];
            double re = v.real(), im = v.imag();
            std::memcpy(p, &re, 8);
            std::memcpy(p + 8, &im, 8);
            p += 16;
        }
    return out;
}

inline json snapshot_sidecar(const FieldSnapshot& s, const SnapshotMeta& m, const std::string& checksum)
{
    return json{{"format", "kbc-snapshot-1"},
                {"macro_time", s.macro_time},
                {"gamma", s.gamma},
                {"regime", s.regime},
                {"N", s.N},
                {"delta", s.delta},
                {"eps", s.eps},
                {"seed", m.seed},
                {"replica", m.replica},
                {"kind", m.kind},
                {"checksum", checksum}};
}

// Returns the checksum of the .bin file.
inline std::string write_snapshot(const fs::path& base, const FieldSnapshot& s, const SnapshotMeta& m = {})
{
    std::string bytes = snapshot_bytes(s);
    std::string sum = sha256_hex(bytes);
    write_file(base.string() + ".bin", bytes);
    write_file(base.string() + ".json", snapshot_sidecar(s, m, sum).dump(2) + "\n");
    return sum;
}

struct LoadedSnapshot {
    FieldSnapshot snapshot;
    SnapshotMeta meta;
    std::string checksum;
};

inline LoadedSnapshot read_snapshot(const fs::path& base)
{
    fs::path jp = base.string() + ".json", bp = base.string() + ".bin";
    json j;
    try {
        j = json::parse(read_file(jp));
    } catch (const json::parse_error& e) {
        throw std::runtime_error(jp.string() + ": malformed sidecar: " + e.what());
    }
    LoadedSnapshot out;
    auto& s = out.snapshot;
    try {
        s.N = j.at("N").get<int>();
        s.macro_time = j.at("macro_time").get<double>();
        s.gamma = j.value("gamma", 0.0);
        s.regime = j.value("regime", std::string());
        s.delta = j.value("delta", 0.0);
        s.eps = j.value("eps", 2.0 / (2.0 * s.N + 1.0));
        out.meta.seed = j.value("seed", std::uint64_t{0});
        out.meta.replica = j.value("replica", std::uint64_t{0});
        out.meta.kind = j.value("kind", std::string("X"));
        out.checksum = j.at("checksum").get<std::string>();
    } catch (const json::exception& e) {
        throw std::runtime_error(jp.string() + ": " + e.what());
    }
    if (s.N < 1) throw std::runtime_error(jp.string() + ": N must be positive");
    std::string bytes = read_file(bp);
    const Torus T(s.N);
    if (bytes.size() != T.size() * 16)
        throw std::runtime_error(bp.string() + ": shape mismatch, sidecar N=" + std::to_string(s.N) + " expects " +
                                 std::to_string(T.size() * 16) + " bytes, file has " + std::to_string(bytes.size()));
    std::string sum = sha256_hex(bytes);
    if (sum != out.checksum)
        throw std::runtime_error(bp.string() + ": checksum mismatch (sidecar " + out.checksum + ", file " + sum + ")");
    s.fourier.assign(T.size(), cplx(0.0));
    const char* p = bytes.data();
    for (int a = -s.N; a <= s.N; ++a)
        for (int b = -s.N; b <= s.N; ++b) {
            double re, im;
            std::memcpy(&re, p, 8);
            std::memcpy(&im, p + 8, 8);
            s.fourier[T.index(a, b)] = cplx(re, im);
            p += 16;
        }
    return out;
}

// Restriction to |w|_inf <= N (zero-extended if the source is smaller).
inline FieldSnapshot restrict_modes(const FieldSnapshot& s, int N)
{
    FieldSnapshot o = s;
    o.N = N;
    o.eps = 2.0 / (2.0 * N + 1.0);
    const Torus T(N);
    o.fourier.assign(T.size(), cplx(0.0));
    const int M = std::min(N, s.N);
    for (int a = -M; a <= M; ++a)
        for (int b = -M; b <= M; ++b) o.fourier[T.index(a, b)] = s.at(a, b);
    return o;
}

// Run manifest: one per output directory.
struct ManifestEntry {
    std::string path; // relative to the directory
    std::string sha256;
    std::uintmax_t bytes = 0;
};

struct RunManifest {
    std::string command;
    std::string config_hash;
    std::string code_version = KBC_VERSION;
    std::vector<std::uint64_t> seeds;
    std::string regime;
    double gamma = 0.0;
    double wall_seconds = 0.0;
    std::string created_utc;
    std::vector<ManifestEntry> files;
};

inline std::string utc_now()
{
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline constexpr const char* manifest_name = "manifest.json";

// Inventories every regular file under dir except the manifest itself.
inline std::vector<ManifestEntry> inventory(const fs::path& dir)
{
    std::vector<ManifestEntry> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto rel = fs::relative(e.path(), dir).generic_string();
        if (rel == manifest_name) continue;
        out.push_back({rel, sha256_file(e.path()), e.file_size()});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
    return out;
}

inline void write_manifest(const fs::path& dir, RunManifest m)
{
    m.files = inventory(dir);
    if (m.created_utc.empty()) m.created_utc = utc_now();
    json files = json::array();
    for (const auto& f : m.files) files.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    json j{{"format", "kbc-manifest-1"}, {"command", m.command},   {"config_hash", m.config_hash},
           {"code_version", m.code_version}, {"seeds", m.seeds}, {"regime", m.regime},
           {"gamma", m.gamma},               {"wall_seconds", m.wall_seconds},
           {"created_utc", m.created_utc},   {"files", files}};
    write_file(dir / manifest_name, j.dump(2) + "\n");
}

struct VerifyReport {
    std::size_t checked = 0;
    std::vector<std::string> problems;
    bool ok() const { return problems.empty(); }
};

inline VerifyReport verify_manifest(const fs::path& dir)
{
    VerifyReport r;
    fs::path mp = dir / manifest_name;
    if (!fs::exists(mp)) {
        r.problems.push_back(mp.string() + ": missing");
        return r;
    }
    json j = json::parse(read_file(mp));
    std::set<std::string> listed;
    for (const auto& f : j.at("files")) {
        std::string rel = f.at("path").get<std::string>();
        listed.insert(rel);
        fs::path p = dir / rel;
        ++r.checked;
        if (!fs::exists(p)) {
            r.problems.push_back(rel + ": missing");
            continue;
        }
        std::string sum = sha256_file(p);
        if (sum != f.at("sha256").get<std::string>()) r.problems.push_back(rel + ": checksum mismatch");
    }
    for (const auto& e : inventory(dir))
        if (!listed.count(e.path)) r.problems.push_back(e.path + ": not listed in manifest");
    return r;
}

// Little-endian binary serialization for checkpoints.
class BinWriter {
public:
    template <class T>
    void pod(const T& v)
    {
        static_assert(std::is_trivially_copyable_v<T>);
        buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    template <class T>
    void vec(const std::vector<T>& v)
    {
        pod<std::uint64_t>(v.size());
        buf_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(T));
    }
    void str(const std::string& s)
    {
        pod<std::uint64_t>(s.size());
        buf_.append(s);
    }
    const std::string& data() const { return buf_; }

private:
    std::string buf_;
};

class BinReader {
public:
    explicit BinReader(std::string data) : buf_(std::move(data)) {}
    template <class T>
    T pod()
    {
        need(sizeof(T));
        T v;
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    template <class T>
    std::vector<T> vec()
    {
        auto n = pod<std::uint64_t>();
        if (n > (buf_.size() - pos_) / std::max<std::size_t>(sizeof(T), 1)) throw std::runtime_error("checkpoint: truncated");
        std::vector<T> v(n);
        std::memcpy(v.data(), buf_.data() + pos_, n * sizeof(T));
        pos_ += n * sizeof(T);
        return v;
    }
    std::string str()
    {
        auto n = pod<std::uint64_t>();
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == buf_.size(); }

private:
    void need(std::size_t n) const
    {
        if (pos_ + n > buf_.size()) throw std::runtime_error("checkpoint: truncated");
    }
    std::string buf_;
    std::size_t pos_ = 0;
};

inline constexpr std::uint64_t checkpoint_magic = 0x3154504b43434b42ULL; // "BKCCKPT1"

inline void write_probe(BinWriter& w, const ProbeState& p) { w.pod(p); }

inline std::string serialize_checkpoint(const Simulator::Checkpoint& c, const std::string& config_hash,
                                        std::uint64_t replica)
{
    BinWriter w;
    w.pod(checkpoint_magic);
    w.str(config_hash);
    w.pod(replica);
    w.pod<std::int32_t>(c.state.torus.N);
    w.vec(c.state.spins);
    w.vec(c.state.local_field);
    w.pod(c.state.micro_time);
    w.pod(c.state.event_count);
    w.vec(c.sigma_tilde);
    w.pod(c.rng);
    w.pod(c.next_time);
    w.pod(c.next_check);
    w.pod<std::uint8_t>(c.triggered_at.has_value());
    w.pod(c.triggered_at.value_or(0.0));
    w.pod(c.coupling);
    w.pod(c.int_A);
    w.pod(c.int_A_tilde);
    w.pod(c.integral_clock);
    w.pod(c.changes);
    w.pod(c.max_refresh_drift);
    w.pod(c.grid_index);
    w.pod<std::uint8_t>(c.has_tracker);
    if (c.has_tracker) {
        const auto& t = c.tracker;
        w.pod(t.time);
        for (const CArray* a : {&t.Zhat, &t.drift, &t.Mhat, &t.X0, &t.Xhat, &t.Dhat}) w.vec(*a);
        w.vec(t.probes);
        w.pod<std::uint8_t>(t.started);
    }
    std::string body = w.data();
    return body + sha256_hex(body);
}

inline Simulator::Checkpoint deserialize_checkpoint(const std::string& data, const std::string& expect_hash,
                                                    std::uint64_t expect_replica)
{
    if (data.size() < 64) throw std::runtime_error("checkpoint: truncated");
    std::string body = data.substr(0, data.size() - 64);
    if (sha256_hex(body) != data.substr(data.size() - 64)) throw std::runtime_error("checkpoint: checksum mismatch");
    BinReader r(body);
    if (r.pod<std::uint64_t>() != checkpoint_magic) throw std::runtime_error("checkpoint: bad magic");
    std::string h = r.str();
    if (!expect_hash.empty() && h != expect_hash)
        throw std::runtime_error("checkpoint: written for a different configuration");
    if (r.pod<std::uint64_t>() != expect_replica) throw std::runtime_error("checkpoint: replica mismatch");
    Simulator::Checkpoint c;
    c.state.torus = Torus(r.pod<std::int32_t>());
    c.state.spins = r.vec<Spin>();
    c.state.local_field = r.vec<double>();
    c.state.micro_time = r.pod<double>();
    c.state.event_count = r.pod<std::uint64_t>();
    c.sigma_tilde = r.vec<Spin>();
    c.rng = r.pod<Rng::State>();
    c.next_time = r.pod<double>();
    c.next_check = r.pod<double>();
    bool trig = r.pod<std::uint8_t>();
    double ta = r.pod<double>();
    if (trig) c.triggered_at = ta;
    c.coupling = r.pod<CouplingStats>();
    c.int_A = r.pod<double>();
    c.int_A_tilde = r.pod<double>();
    c.integral_clock = r.pod<double>();
    c.changes = r.pod<std::uint64_t>();
    c.max_refresh_drift = r.pod<double>();
    c.grid_index = r.pod<std::uint64_t>();
    c.has_tracker = r.pod<std::uint8_t>();
    if (c.has_tracker) {
        auto& t = c.tracker;
        t.time = r.pod<double>();
        for (CArray* a : {&t.Zhat, &t.drift, &t.Mhat, &t.X0, &t.Xhat, &t.Dhat}) *a = r.vec<cplx>();
        t.probes = r.vec<ProbeState>();
        t.started = r.pod<std::uint8_t>();
    }
    if (!r.done()) throw std::runtime_error("checkpoint: trailing data");
    if (c.state.spins.size() != c.state.torus.size() || c.state.local_field.size() != c.state.torus.size())
        throw std::runtime_error("checkpoint: array sizes do not match the torus");
    return c;
}

// CSV with locale-independent numbers.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : ncol_(header.size()) { row_strings(header); }

    void row_strings(const std::vector<std::string>& cells)
    {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ += ',';
            out_ += cells[i];
        }
        out_ += '\n';
    }

    CsvWriter& cell(const std::string& s)
    {
        cur_.push_back(s);
        return *this;
    }
    CsvWriter& cell(double v)
    {
        cur_.push_back(fmt_num(v));
        return *this;
    }
    CsvWriter& cell(std::int64_t v)
    {
        cur_.push_back(std::to_string(v));
        return *this;
    }
    CsvWriter& cell(std::uint64_t v)
    {
        cur_.push_back(std::to_string(v));
        return *this;
    }
    CsvWriter& cell(int v)
    {
        cur_.push_back(std::to_string(v));
        return *this;
    }
    void end()
    {
        if (cur_.size() != ncol_) throw std::logic_error("csv: row has wrong number of cells");
        row_strings(cur_);
        cur_.clear();
    }
    const std::string& str() const { return out_; }
    void save(const fs::path& p) const { write_file(p, out_); }

private:
    std::size_t ncol_;
    std::vector<std::string> cur_;
    std::string out_;
};

} // namespace kbc
