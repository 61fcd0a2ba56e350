#include "sdmae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace sdmae::checkpoint {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written as raw little-endian words");

namespace {

constexpr char kMagic[6] = {'S', 'D', 'M', 'A', 'E', '\0'};
constexpr std::uint8_t kDtypeF64 = 0;

void put_u32(std::string& out, std::uint32_t v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_u64(std::string& out, std::uint64_t v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_i64(std::string& out, std::int64_t v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_bytes(std::string& out, const std::string& s) {
    if (s.size() > UINT32_MAX) throw_io("checkpoint: oversized string field");
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.append(s);
}

void put_section(std::string& out, const std::vector<std::pair<std::string, Mat>>& tensors) {
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, m] : tensors) {
        put_bytes(out, name);
        out.push_back(static_cast<char>(kDtypeF64));
        out.push_back(2);  // rank
        put_u32(out, static_cast<std::uint32_t>(m.rows));
        put_u32(out, static_cast<std::uint32_t>(m.cols));
        out.append(reinterpret_cast<const char*>(m.data.data()), m.size() * sizeof(double));
    }
}

// Reader over the in-memory body with hard bounds checks; any overrun means
// the file was truncated after the checksum was stamped, which the checksum
// itself cannot catch if the truncation removed trailing bytes first.
class Cursor {
public:
    Cursor(const char* data, size_t len, const std::string& path)
        : data_(data), len_(len), path_(path) {}

    std::uint32_t u32() { return take<std::uint32_t>(); }
    std::uint64_t u64() { return take<std::uint64_t>(); }
    std::int64_t i64() { return take<std::int64_t>(); }
    std::uint8_t u8() { return static_cast<std::uint8_t>(raw(1)[0]); }

    std::string bytes() {
        const std::uint32_t n = u32();
        const char* p = raw(n);
        return std::string(p, n);
    }

    void doubles(Mat& m) {
        const size_t n = m.size() * sizeof(double);
        std::memcpy(m.data.data(), raw(n), n);
    }

    bool exhausted() const { return pos_ == len_; }

private:
    template <typename T>
    T take() {
        T v;
        std::memcpy(&v, raw(sizeof(T)), sizeof(T));
        return v;
    }

    const char* raw(size_t n) {
        if (len_ - pos_ < n) throw_data("checkpoint truncated: " + path_);
        const char* p = data_ + pos_;
        pos_ += n;
        return p;
    }

    const char* data_;
    size_t len_;
    size_t pos_ = 0;
    const std::string& path_;
};

void read_section(Cursor& c, std::vector<std::pair<std::string, Mat>>& out,
                  const std::string& path) {
    const std::uint32_t count = c.u32();
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = c.bytes();
        const std::uint8_t dtype = c.u8();
        const std::uint8_t rank = c.u8();
        if (dtype != kDtypeF64 || rank != 2) {
            throw_data("checkpoint: unsupported tensor encoding in " + path);
        }
        const std::uint32_t rows = c.u32();
        const std::uint32_t cols = c.u32();
        if (rows == 0 || cols == 0 || static_cast<std::uint64_t>(rows) * cols > (1u << 28)) {
            throw_data("checkpoint: implausible tensor shape in " + path);
        }
        Mat m(static_cast<int>(rows), static_cast<int>(cols));
        c.doubles(m);
        out.emplace_back(std::move(name), std::move(m));
    }
}

}  // namespace

const Mat* Checkpoint::find_param(const std::string& name) const {
    for (const auto& [n, m] : model_params) {
        if (n == name) return &m;
    }
    return nullptr;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
    std::string body;
    put_u64(body, c.config_hash);
    put_i64(body, c.epoch);
    put_i64(body, c.step);
    put_bytes(body, c.rng_state);
    put_section(body, c.model_params);
    put_section(body, c.opt_state);

    std::string head;
    head.append(kMagic, sizeof kMagic);
    put_u32(head, Checkpoint::kFormatVersion);
    put_u64(head, fnv1a64(body.data(), body.size()));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw_io("cannot open checkpoint for writing: " + path);
    f.write(head.data(), static_cast<std::streamsize>(head.size()));
    f.write(body.data(), static_cast<std::streamsize>(body.size()));
    f.flush();
    if (!f) throw_io("short write while saving checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw_io("cannot open checkpoint: " + path);
    std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (f.bad()) throw_io("read failure on checkpoint: " + path);

    const size_t head_len = sizeof kMagic + sizeof(std::uint32_t) + sizeof(std::uint64_t);
    if (blob.size() < head_len) throw_data("checkpoint truncated: " + path);
    if (std::memcmp(blob.data(), kMagic, sizeof kMagic) != 0) {
        throw_data("not a checkpoint file (bad magic): " + path);
    }
    std::uint32_t version;
    std::memcpy(&version, blob.data() + sizeof kMagic, sizeof version);
    if (version != Checkpoint::kFormatVersion) {
        throw_data("checkpoint format version " + std::to_string(version) + " unsupported (want " +
                   std::to_string(Checkpoint::kFormatVersion) + "): " + path);
    }
    std::uint64_t stored_sum;
    std::memcpy(&stored_sum, blob.data() + sizeof kMagic + sizeof version, sizeof stored_sum);

    const char* body = blob.data() + head_len;
    const size_t body_len = blob.size() - head_len;
    if (fnv1a64(body, body_len) != stored_sum) {
        throw_data("checkpoint checksum mismatch (corrupt file): " + path);
    }

    Checkpoint c;
    Cursor cur(body, body_len, path);
    c.config_hash = cur.u64();
    c.epoch = cur.i64();
    c.step = cur.i64();
    c.rng_state = cur.bytes();
    read_section(cur, c.model_params, path);
    read_section(cur, c.opt_state, path);
    if (!cur.exhausted()) throw_data("checkpoint has trailing bytes: " + path);
    return c;
}

}  // namespace sdmae::checkpoint
