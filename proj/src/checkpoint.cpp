#include "fast/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <map>
#include <sstream>

#include "fast/io.hpp"

namespace fast {

namespace {

constexpr char kMagic[] = "FSTCKPT\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

void append_values(std::string& out, std::span<const double> values) {
    for (double v : values) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        if constexpr (std::endian::native == std::endian::big) {
            bits = __builtin_bswap64(bits);
        }
        char buf[8];
        std::memcpy(buf, &bits, 8);
        out.append(buf, 8);
    }
}

std::string shape_token(const Shape& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        out += (i ? "x" : "") + std::to_string(s[i]);
    }
    return out;
}

class Reader {
   public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    std::size_t offset() const { return pos_; }

    std::string line() {
        const std::size_t end = bytes_.find('\n', pos_);
        if (end == std::string::npos) {
            throw ParseError("unexpected end of checkpoint", pos_);
        }
        std::string out = bytes_.substr(pos_, end - pos_);
        pos_ = end + 1;
        return out;
    }

    std::vector<double> values(std::size_t count) {
        if (bytes_.size() - pos_ < count * 8) {
            throw ParseError("tensor data truncated", bytes_.size());
        }
        std::vector<double> out(count);
        for (auto& v : out) {
            std::uint64_t bits;
            std::memcpy(&bits, bytes_.data() + pos_, 8);
            if constexpr (std::endian::native == std::endian::big) {
                bits = __builtin_bswap64(bits);
            }
            v = std::bit_cast<double>(bits);
            pos_ += 8;
        }
        return out;
    }

    bool at_end() const { return pos_ == bytes_.size(); }

   private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

std::size_t to_size(const std::map<std::string, std::string>& kv, const std::string& key, std::size_t offset) {
    auto it = kv.find(key);
    if (it == kv.end()) {
        throw ParseError("checkpoint is missing '" + key + "'", offset);
    }
    try {
        return std::stoull(it->second);
    } catch (const std::exception&) {
        throw ParseError("checkpoint field '" + key + "' is not an integer", offset);
    }
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    const ModelConfig& c = ckpt.config;
    std::ostringstream head;
    head << kMagic << "format_version=" << kCheckpointFormatVersion << '\n'
         << "nodes=" << c.nodes << '\n'
         << "input_steps=" << c.input_steps << '\n'
         << "horizon=" << c.horizon << '\n'
         << "hidden=" << c.hidden << '\n'
         << "experts=" << c.experts << '\n'
         << "agents=" << c.agents << '\n'
         << "layers=" << c.layers << '\n'
         << "steps_per_day=" << c.steps_per_day << '\n'
         << "days_per_week=" << c.days_per_week << '\n'
         << "router=" << to_string(c.router) << '\n'
         << "time_anchor=" << to_string(ckpt.time_anchor) << '\n'
         << "train_ratio=" << format_double(ckpt.train_ratio) << '\n'
         << "val_ratio=" << format_double(ckpt.val_ratio) << '\n';
    auto named = ckpt.params.named();
    head << "tensors=" << named.size() + 2 << '\n';
    std::string out = head.str();
    auto emit = [&](const std::string& name, const Shape& shape, std::span<const double> values) {
        out += name + " " + shape_token(shape) + "\n";
        append_values(out, values);
    };
    for (const auto& nt : named) {
        emit(nt.name, nt.tensor.shape(), nt.tensor.data());
    }
    const Shape ns{ckpt.normalizer.nodes()};
    emit("normalizer.mean", ns, ckpt.normalizer.mean());
    emit("normalizer.std", ns, ckpt.normalizer.stddev());
    return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
    if (bytes.compare(0, kMagicLen, kMagic) != 0) {
        throw ParseError("bad checkpoint magic", 0);
    }
    Reader r(bytes);
    r.line();
    std::map<std::string, std::string> kv;
    std::size_t tensor_count = 0;
    while (true) {
        const std::size_t off = r.offset();
        const std::string l = r.line();
        const auto eq = l.find('=');
        if (eq == std::string::npos) {
            throw ParseError("malformed checkpoint header line '" + l + "'", off);
        }
        const std::string key = l.substr(0, eq);
        if (key == "tensors") {
            tensor_count = to_size({{key, l.substr(eq + 1)}}, key, off);
            break;
        }
        kv[key] = l.substr(eq + 1);
    }
    const std::size_t header_end = r.offset();
    if (to_size(kv, "format_version", header_end) != static_cast<std::size_t>(kCheckpointFormatVersion)) {
        throw ParseError("unsupported checkpoint format version " + kv["format_version"], 0);
    }
    Checkpoint ck;
    ModelConfig& c = ck.config;
    c.nodes = to_size(kv, "nodes", header_end);
    c.input_steps = to_size(kv, "input_steps", header_end);
    c.horizon = to_size(kv, "horizon", header_end);
    c.hidden = to_size(kv, "hidden", header_end);
    c.experts = to_size(kv, "experts", header_end);
    c.agents = to_size(kv, "agents", header_end);
    c.layers = to_size(kv, "layers", header_end);
    c.steps_per_day = to_size(kv, "steps_per_day", header_end);
    c.days_per_week = to_size(kv, "days_per_week", header_end);
    try {
        c.router = parse_router_mode(kv.at("router"));
        ck.time_anchor = parse_time_anchor(kv.at("time_anchor"));
        ck.train_ratio = std::stod(kv.at("train_ratio"));
        ck.val_ratio = std::stod(kv.at("val_ratio"));
    } catch (const std::exception& e) {
        throw ParseError(std::string("bad checkpoint metadata: ") + e.what(), header_end);
    }

    ck.params = ModelParams::allocate(c);
    std::map<std::string, Tensor> slots;
    for (auto& nt : ck.params.named()) {
        slots.emplace(nt.name, nt.tensor);
    }
    std::vector<double> mean, stddev;
    for (std::size_t i = 0; i < tensor_count; ++i) {
        const std::size_t off = r.offset();
        const std::string l = r.line();
        const auto space = l.find(' ');
        if (space == std::string::npos) {
            throw ParseError("malformed tensor header '" + l + "'", off);
        }
        const std::string name = l.substr(0, space);
        const std::string shape_text = l.substr(space + 1);
        Shape shape;
        std::istringstream dims(shape_text);
        for (std::string tok; std::getline(dims, tok, 'x');) {
            try {
                shape.push_back(std::stoull(tok));
            } catch (const std::exception&) {
                throw ParseError("malformed shape '" + shape_text + "'", off);
            }
        }
        std::vector<double> values = r.values(numel(shape));
        if (name == "normalizer.mean") {
            mean = std::move(values);
            continue;
        }
        if (name == "normalizer.std") {
            stddev = std::move(values);
            continue;
        }
        auto it = slots.find(name);
        if (it == slots.end()) {
            throw ParseError("unknown tensor '" + name + "'", off);
        }
        if (it->second.shape() != shape) {
            throw ParseError("tensor '" + name + "' has shape " + to_string(shape) + ", expected " +
                                 to_string(it->second.shape()),
                             off);
        }
        auto dst = it->second.mutable_data();
        std::copy(values.begin(), values.end(), dst.begin());
        slots.erase(it);
    }
    if (!slots.empty()) {
        throw ParseError("checkpoint is missing tensor '" + slots.begin()->first + "'", r.offset());
    }
    if (mean.size() != c.nodes || stddev.size() != c.nodes) {
        throw ParseError("checkpoint normalizer does not match node count", r.offset());
    }
    if (!r.at_end()) {
        throw ParseError("trailing bytes in checkpoint", r.offset());
    }
    ck.normalizer = Normalizer(std::move(mean), std::move(stddev));
    return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

}  // namespace fast
