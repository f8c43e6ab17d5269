#include "lrd/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "lrd/error.hpp"

namespace lrd {

void Checkpoint::add(std::string name, Tensor t) {
    if (name.empty()) throw ArgumentError("checkpoint tensor names must be non-empty");
    if (index_.count(name)) throw ArgumentError("duplicate checkpoint tensor '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(t));
}

void Checkpoint::set(const std::string& name, Tensor t) {
    if (auto it = index_.find(name); it != index_.end()) {
        entries_[it->second].second = std::move(t);
        return;
    }
    add(name, std::move(t));
}

const Tensor* Checkpoint::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].second;
}

const Tensor& Checkpoint::at(const std::string& name) const {
    if (const auto* t = find(name)) return *t;
    throw ArgumentError("checkpoint has no tensor '" + name + "'");
}

Tensor narrowed_to_f32(const Tensor& t) {
    Tensor out = t;
    for (auto& v : out.data()) v = static_cast<double>(static_cast<float>(v));
    return out;
}

namespace {

class Writer {
public:
    std::vector<std::uint8_t> bytes;

    template <typename T>
    void put(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i)
            bytes.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
    }
    void put_f32(float f) { put(std::bit_cast<std::uint32_t>(f)); }
    void put_raw(const std::string& s) { bytes.insert(bytes.end(), s.begin(), s.end()); }
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n)
            throw DataError("truncated checkpoint at byte offset " + std::to_string(pos_) +
                            " while reading " + what);
    }

    template <typename T>
    T get(const char* what) {
        need(sizeof(T), what);
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += sizeof(T);
        return static_cast<T>(v);
    }

    std::string get_string(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.size() > std::numeric_limits<std::uint32_t>::max())
        throw ArgumentError("too many tensors for one checkpoint");
    Writer w;
    w.put_raw("LRDC");
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.size()));
    for (const auto& [name, t] : ckpt.entries()) {
        if (name.size() > std::numeric_limits<std::uint16_t>::max())
            throw ArgumentError("tensor name longer than 65535 bytes: " + name.substr(0, 32) + "...");
        if (t.ndim() > std::numeric_limits<std::uint8_t>::max())
            throw ArgumentError("tensor '" + name + "' has too many dims");
        w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
        w.put_raw(name);
        w.put<std::uint8_t>(0);
        w.put<std::uint8_t>(static_cast<std::uint8_t>(t.ndim()));
        for (auto d : t.shape()) w.put<std::uint64_t>(d);
        for (double v : t.data()) {
            const float f = static_cast<float>(v);
            if (!std::isfinite(f))
                throw DataError("tensor '" + name + "' has a value that is not finite in f32");
            w.put_f32(f);
        }
    }
    return std::move(w.bytes);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    if (r.get_string(4, "magic") != "LRDC") throw DataError("bad magic: not an LRDC checkpoint");
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    const auto count = r.get<std::uint32_t>("tensor count");

    Checkpoint ckpt;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t entry_offset = r.offset();
        const auto name_len = r.get<std::uint16_t>("name length");
        if (name_len == 0)
            throw DataError("empty tensor name at byte offset " + std::to_string(entry_offset));
        std::string name = r.get_string(name_len, "tensor name");
        const auto dtype = r.get<std::uint8_t>("dtype");
        if (dtype != 0)
            throw DataError("tensor '" + name + "': unsupported dtype " + std::to_string(dtype));
        const auto ndim = r.get<std::uint8_t>("ndim");
        if (ndim == 0) throw DataError("tensor '" + name + "': ndim must be >= 1");

        Shape shape(ndim);
        std::uint64_t volume = 1;
        for (auto& d : shape) {
            const auto dim = r.get<std::uint64_t>("dims");
            if (dim == 0) throw DataError("tensor '" + name + "': zero-sized dim");
            // Bound the volume by what the remaining bytes could hold before allocating.
            if (dim > r.remaining() / 4 || volume > (r.remaining() / 4) / dim)
                throw DataError("truncated checkpoint at byte offset " + std::to_string(r.offset()) +
                                ": tensor '" + name + "' declares more data than the file holds");
            volume *= dim;
            d = static_cast<std::size_t>(dim);
        }
        r.need(volume * 4, "tensor data");

        std::vector<double> data(volume);
        for (auto& v : data) {
            const float f = std::bit_cast<float>(r.get<std::uint32_t>("tensor data"));
            if (!std::isfinite(f)) throw DataError("tensor '" + name + "' contains NaN or Inf");
            v = f;
        }
        if (ckpt.contains(name)) throw DataError("duplicate tensor name '" + name + "'");
        ckpt.add(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    if (r.remaining() != 0)
        throw DataError("trailing bytes after last tensor at byte offset " +
                        std::to_string(r.offset()));
    return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
    return decode_checkpoint(bytes);
}

}  // namespace lrd
