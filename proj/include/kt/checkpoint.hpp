#pragma once

// Binary checkpoint: fixed header, text manifest, raw little-endian doubles.
//
//   bytes 0..7    magic "KTCKPT\0\1"
//   bytes 8..11   format version, u32
//   bytes 12..27  architecture tag, NUL padded
//   bytes 28..35  manifest length in bytes, u64
//   manifest      UTF-8 lines, see write_checkpoint
//   payload       every tensor in manifest order, row-major f64

#include "kt/config.hpp"
#include "kt/models/model.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace kt {

inline constexpr std::array<char, 8> kCheckpointMagic{'K', 'T', 'C', 'K', 'P', 'T', '\0', '\1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::size_t kArchTagWidth = 16;

struct Checkpoint {
    ModelState state;
    SkillVocabulary vocabulary;
    TrainConfig train;
    std::size_t final_epoch = 0;
};

namespace detail {

template <typename U>
void put_le(std::ostream& os, U v) {
    unsigned char b[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), sizeof(U));
}

template <typename U>
U get_le(std::istream& is, const char* what) {
    unsigned char b[sizeof(U)];
    if (!is.read(reinterpret_cast<char*>(b), sizeof(U))) throw FormatError(std::string("checkpoint truncated in ") + what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
    return v;
}

} // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
    std::ostringstream manifest;
    RunConfig snapshot;
    snapshot.model = ck.state.config;
    snapshot.train = ck.train;
    manifest << "num_skills " << ck.state.config.num_skills << '\n' << "final_epoch " << ck.final_epoch << '\n';
    manifest << "vocabulary " << ck.vocabulary.size() << '\n';
    for (const auto& key : ck.vocabulary.keys()) manifest << key.subject << ' ' << key.level << '\n';
    std::ostringstream config;
    write_run_config(config, snapshot);
    const std::string config_text = config.str();
    manifest << "config " << std::count(config_text.begin(), config_text.end(), '\n') << '\n' << config_text;
    manifest << "tensors " << ck.state.params.size() << '\n';
    for (const auto& p : ck.state.params) manifest << p.name << ' ' << p.value.rows() << ' ' << p.value.cols() << '\n';
    const std::string text = manifest.str();

    os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    detail::put_le<std::uint32_t>(os, kCheckpointVersion);
    std::array<char, kArchTagWidth> arch{};
    const auto t = tag(ck.state.config.arch);
    std::memcpy(arch.data(), t.data(), std::min(t.size(), arch.size()));
    os.write(arch.data(), arch.size());
    detail::put_le<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : ck.state.params) {
        for (double v : p.value.values()) detail::put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
    }
    if (!os) throw IoError("failed writing checkpoint");
}

/// Reads a checkpoint. With expected_skills set, a different vocabulary size is an EncodingError.
inline Checkpoint read_checkpoint(std::istream& is, std::optional<std::size_t> expected_skills = std::nullopt) {
    std::array<char, 8> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kCheckpointMagic) throw FormatError("not a checkpoint file");
    const auto version = detail::get_le<std::uint32_t>(is, "header");
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    std::array<char, kArchTagWidth> arch{};
    if (!is.read(arch.data(), arch.size())) throw FormatError("checkpoint truncated in header");
    const Architecture header_arch = parse_architecture(std::string(arch.data(), strnlen(arch.data(), arch.size())));
    const auto length = detail::get_le<std::uint64_t>(is, "header");
    std::string text(length, '\0');
    if (!is.read(text.data(), static_cast<std::streamsize>(length))) throw FormatError("checkpoint truncated in manifest");

    std::istringstream manifest(text);
    auto expect = [&](const char* word) {
        std::string got;
        std::size_t n = 0;
        if (!(manifest >> got >> n) || got != word) throw FormatError(std::string("checkpoint manifest: expected ") + word);
        return n;
    };
    Checkpoint ck;
    const std::size_t skills = expect("num_skills");
    ck.final_epoch = expect("final_epoch");
    const std::size_t vocab_size = expect("vocabulary");
    std::vector<SkillKey> keys;
    for (std::size_t i = 0; i < vocab_size; ++i) {
        SkillKey k;
        if (!(manifest >> k.subject >> k.level)) throw FormatError("checkpoint manifest: bad vocabulary entry");
        keys.push_back(k);
    }
    ck.vocabulary = SkillVocabulary(std::move(keys));
    if (expected_skills && *expected_skills != skills) {
        throw EncodingError("checkpoint was trained on " + std::to_string(skills) + " skills but the data has " +
                            std::to_string(*expected_skills));
    }
    const std::size_t config_lines = expect("config");
    std::string line;
    std::getline(manifest, line);
    std::string config_text;
    for (std::size_t i = 0; i < config_lines; ++i) {
        if (!std::getline(manifest, line)) throw FormatError("checkpoint manifest: truncated config");
        config_text += line + '\n';
    }
    std::istringstream config_in(config_text);
    const RunConfig snapshot = load_run_config(config_in, "checkpoint config");
    if (snapshot.model.arch != header_arch) throw FormatError("checkpoint header and manifest disagree on architecture");
    ck.train = snapshot.train;
    ModelConfig mc = snapshot.model;
    mc.num_skills = skills;
    ck.state = init_model(mc);

    const std::size_t tensors = expect("tensors");
    if (tensors != ck.state.params.size()) {
        throw FormatError("checkpoint holds " + std::to_string(tensors) + " tensors, architecture " +
                          std::string(tag(mc.arch)) + " needs " + std::to_string(ck.state.params.size()));
    }
    for (auto& p : ck.state.params) {
        std::string name;
        std::size_t rows = 0, cols = 0;
        if (!(manifest >> name >> rows >> cols)) throw FormatError("checkpoint manifest: bad tensor entry");
        if (name != p.name || rows != p.value.rows() || cols != p.value.cols()) {
            throw FormatError("checkpoint tensor " + name + " " + Matrix::shape_string(rows, cols) + " does not match " +
                              p.name + " " + p.value.shape());
        }
    }
    for (auto& p : ck.state.params) {
        for (double& v : p.value.values()) v = std::bit_cast<double>(detail::get_le<std::uint64_t>(is, p.name.c_str()));
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint payload");
    return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    write_checkpoint(os, ck);
}

inline Checkpoint load_checkpoint(const std::string& path, std::optional<std::size_t> expected_skills = std::nullopt) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path);
    return read_checkpoint(is, expected_skills);
}

} // namespace kt
