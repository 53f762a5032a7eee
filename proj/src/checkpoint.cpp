#include "lla/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "lla/errors.hpp"

namespace lla {

namespace {

constexpr std::string_view kMagic = "LLACKPT1";

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += 8;
        return v;
    }

    std::string_view take(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw FormatError("checkpoint: truncated at byte " + std::to_string(pos_));
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

std::string serialize_checkpoint(const ParamStore& params, std::uint64_t config_digest) {
    std::string out(kMagic);
    put_u64(out, config_digest);
    put_u64(out, params.size());
    for (const Param& p : params) {
        put_u64(out, p.name.size());
        out += p.name;
        const Shape& s = p.value.shape();
        put_u64(out, s.n);
        put_u64(out, s.c);
        put_u64(out, s.h);
        put_u64(out, s.w);
        for (double v : p.value.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

std::uint64_t deserialize_checkpoint(std::string_view bytes, ParamStore& into,
                                     std::optional<std::uint64_t> expected_digest) {
    Reader r(bytes);
    if (r.take(kMagic.size()) != kMagic) throw FormatError("checkpoint: bad magic");
    const std::uint64_t digest = r.u64();
    if (expected_digest && *expected_digest != digest) {
        throw ConfigError("checkpoint", "config digest " + hex64(digest) + " does not match " +
                                            hex64(*expected_digest));
    }
    const std::uint64_t count = r.u64();
    if (count != into.size()) {
        throw FormatError("checkpoint: holds " + std::to_string(count) + " entries, network has " +
                          std::to_string(into.size()));
    }
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::string name(r.take(r.u64()));
        auto idx = into.find(name);
        if (!idx) throw FormatError("checkpoint: unknown entry " + name);
        Shape s;
        s.n = r.u64();
        s.c = r.u64();
        s.h = r.u64();
        s.w = r.u64();
        Tensor& dst = into[*idx].value;
        if (s != dst.shape()) {
            throw FormatError("checkpoint: entry " + name + " has shape " + s.str() + ", expected " +
                              dst.shape().str());
        }
        for (double& v : dst.data()) v = std::bit_cast<double>(r.u64());
    }
    if (!r.done()) throw FormatError("checkpoint: trailing bytes");
    return digest;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, std::uint64_t config_digest) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint " + path.string());
    const std::string bytes = serialize_checkpoint(params, config_digest);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed for " + path.string());
}

std::uint64_t load_checkpoint(const std::filesystem::path& path, ParamStore& into,
                              std::optional<std::uint64_t> expected_digest) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read checkpoint " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return deserialize_checkpoint(ss.str(), into, expected_digest);
}

}  // namespace lla
