#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <functional>
#include <random>

#include "oracles.hpp"
#include "pruneseg/io.hpp"
#include "pruneseg/prune.hpp"

using namespace pruneseg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("pruneseg_io_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

}  // namespace

TEST_CASE("PRNW round trip is bit-exact for a fresh toy network") {
    TempDir tmp;
    const Network net = build_toy_network(Head::sigmoid, 91);
    save_network(tmp.file("a.prnw"), net);
    const Network back = load_network(tmp.file("a.prnw"), Head::sigmoid);
    for (const auto& [name, t] : net.params) REQUIRE(back.param(name).data == t.data);
    REQUIRE(back.masks.empty());

    // saving again produces identical bytes
    save_network(tmp.file("b.prnw"), back);
    REQUIRE(slurp(tmp.file("a.prnw")) == slurp(tmp.file("b.prnw")));
}

TEST_CASE("PRNW round trip preserves masks and the sparsity report") {
    TempDir tmp;
    Network net = build_toy_network(Head::linear, 92);
    auto masks = prune_layerwise(net, 0.75f);
    for (auto& [name, mask] : masks) net.masks[name] = std::move(mask);
    net.apply_masks();
    const SparsityReport before = sparsity_report(net);

    save_network(tmp.file("m.prnw"), net);
    const Network back = load_network(tmp.file("m.prnw"), Head::linear);
    const SparsityReport after = sparsity_report(back);
    REQUIRE(after.total == before.total);
    REQUIRE(after.nonzero == before.nonzero);
    REQUIRE(after.global_sparsity == before.global_sparsity);
    for (const auto& [name, mask] : net.masks) REQUIRE(back.masks.at(name).bits == mask.bits);
}

TEST_CASE("PRNW loader rejects structural corruption with distinct errors") {
    TempDir tmp;
    const Network net = build_toy_network(Head::sigmoid, 93);
    save_network(tmp.file("ok.prnw"), net);
    const std::string good = slurp(tmp.file("ok.prnw"));

    std::string bad = good;
    bad[0] = 'X';
    spit(tmp.file("bad.prnw"), bad);
    try {
        load_weights(tmp.file("bad.prnw"));
        FAIL("expected bad magic");
    } catch (const IoError& e) {
        REQUIRE(e.kind == IoErrorKind::bad_magic);
    }

    bad = good;
    bad[4] = 2;  // version
    spit(tmp.file("ver.prnw"), bad);
    try {
        load_weights(tmp.file("ver.prnw"));
        FAIL("expected bad version");
    } catch (const IoError& e) {
        REQUIRE(e.kind == IoErrorKind::bad_version);
    }

    spit(tmp.file("trunc.prnw"), good.substr(0, good.size() / 2));
    try {
        load_weights(tmp.file("trunc.prnw"));
        FAIL("expected truncation");
    } catch (const IoError& e) {
        REQUIRE(e.kind == IoErrorKind::truncated);
    }

    spit(tmp.file("trail.prnw"), good + "junk");
    try {
        load_weights(tmp.file("trail.prnw"));
        FAIL("expected trailing data");
    } catch (const IoError& e) {
        REQUIRE(e.kind == IoErrorKind::trailing_data);
    }
}

TEST_CASE("PRNW loader rejects mask/zero inconsistency") {
    TempDir tmp;
    // hand-built file: one tensor "w", shape [2], data {0,1}, mask keeps only
    // index 1 -> index 0 is masked and must be 0.0 (it is); then flip the data
    // so the masked slot holds a nonzero.
    std::string buf = "PRNW";
    auto u32 = [&](uint32_t v) { for (int i = 0; i < 4; ++i) buf.push_back(char((v >> (8 * i)) & 0xff)); };
    auto u16 = [&](uint16_t v) { buf.push_back(char(v & 0xff)); buf.push_back(char(v >> 8)); };
    u32(1);  // version
    u32(1);  // count
    u16(1);
    buf += "w";
    buf.push_back(1);  // ndim
    u32(2);            // dim
    buf.push_back(1);  // has_mask
    const float data[2] = {0.0f, 1.0f};
    for (float f : data) {
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        u32(bits);
    }
    buf.push_back(0x02);  // keep bit for index 1 only (LSB-first)
    spit(tmp.file("good_mask.prnw"), buf);
    REQUIRE_NOTHROW(load_weights(tmp.file("good_mask.prnw")));

    std::string bad = buf;
    bad[bad.size() - 9] = 0x01;  // masked slot's low data byte becomes nonzero
    spit(tmp.file("bad_mask.prnw"), bad);
    try {
        load_weights(tmp.file("bad_mask.prnw"));
        FAIL("expected mask mismatch");
    } catch (const IoError& e) {
        REQUIRE(e.kind == IoErrorKind::mask_mismatch);
    }
}

TEST_CASE("PGM round trip and label overflow") {
    TempDir tmp;
    std::mt19937_64 rng(94);
    const LabelMap lm = oracle::random_labelmap(rng, 13, 9, 3);
    save_labelmap(tmp.file("l.pgm"), lm);
    REQUIRE(load_labelmap(tmp.file("l.pgm")) == lm);

    const LabelMap empty(4, 4);
    save_labelmap(tmp.file("e.pgm"), empty);
    REQUIRE(load_labelmap(tmp.file("e.pgm")) == empty);

    LabelMap overflow(2, 2);
    overflow.at(0, 0) = 70000;
    try {
        save_labelmap(tmp.file("o.pgm"), overflow);
        FAIL("expected label overflow");
    } catch (const IoError& e) {
        REQUIRE(e.kind == IoErrorKind::label_overflow);
    }
}

TEST_CASE("PGM loader accepts 8-bit external files and comments") {
    TempDir tmp;
    const char raw[] = "P5\n# a comment\n3 2\n255\n\x01\x02\x03\x00\x00\x01";
    spit(tmp.file("ext.pgm"), std::string(raw, sizeof(raw) - 1));
    const LabelMap lm = load_labelmap(tmp.file("ext.pgm"));
    REQUIRE(lm.width == 3);
    REQUIRE(lm.height == 2);
    REQUIRE(lm.at(0, 0) == 1);
    REQUIRE(lm.at(1, 2) == 1);
}

TEST_CASE("PFM round trip is bit-exact and bottom-to-top on disk") {
    TempDir tmp;
    std::mt19937_64 rng(95);
    std::uniform_real_distribution<float> u(-5.0f, 5.0f);
    Tensor map({6, 4});
    for (float& v : map.data) v = u(rng);
    save_floatmap(tmp.file("f.pfm"), map);
    const Tensor back = load_floatmap(tmp.file("f.pfm"));
    REQUIRE(back.shape == map.shape);
    REQUIRE(back.data == map.data);

    // checkerboard orientation audit: the first stored row is the bottom row
    Tensor board({2, 2});
    board.at(0, 0) = 1.0f;  // top-left
    board.at(1, 1) = 2.0f;  // bottom-right
    save_floatmap(tmp.file("c.pfm"), board);
    const std::string raw = slurp(tmp.file("c.pfm"));
    const size_t data_at = raw.size() - 4u * 4u;
    float first_stored;
    std::memcpy(&first_stored, raw.data() + data_at, 4);
    REQUIRE(first_stored == board.at(1, 0));  // bottom row comes first
}

TEST_CASE("PFM loader rejects color, big-endian and malformed files") {
    TempDir tmp;
    spit(tmp.file("color.pfm"), "PF\n2 2\n-1.0\n0123456789abcdef");
    try {
        load_floatmap(tmp.file("color.pfm"));
        FAIL("expected unsupported format");
    } catch (const IoError& e) {
        REQUIRE(e.kind == IoErrorKind::unsupported_format);
    }

    spit(tmp.file("be.pfm"), std::string("Pf\n1 1\n1.0\n") + std::string(4, '\0'));
    try {
        load_floatmap(tmp.file("be.pfm"));
        FAIL("expected unsupported format");
    } catch (const IoError& e) {
        REQUIRE(e.kind == IoErrorKind::unsupported_format);
    }

    spit(tmp.file("hdr.pfm"), "Pf\n2 junk\n-1.0\n");
    try {
        load_floatmap(tmp.file("hdr.pfm"));
        FAIL("expected malformed header");
    } catch (const IoError& e) {
        REQUIRE(e.kind == IoErrorKind::malformed_header);
    }

    try {
        save_floatmap(tmp.file("nan.pfm"), Tensor({1, 1}, {NAN}));
        FAIL("expected refusal to write NaN");
    } catch (const IoError&) {
    }
}

TEST_CASE("results CSV: header, ordering and parse-back") {
    TempDir tmp;
    write_results_csv(tmp.file("empty.csv"), {});
    REQUIRE(slurp(tmp.file("empty.csv")) ==
            "run_id,branch,method,cr,sparsity,dice,mse,aji,pq,speedup\n");

    MetricsReport r1;
    r1.run_id = "run";
    r1.branch = "seg";
    r1.method = "layerwise";
    r1.cr = 4;
    r1.sparsity = 0.75;
    r1.dice = 0.987654321;
    r1.mse = 0.00123456789;
    r1.aji = 0.65;
    r1.pq = 0.6;
    r1.speedup = 3.957;
    MetricsReport r2 = r1;
    r2.cr = 2;
    r2.sparsity = 0.5;
    write_results_csv(tmp.file("two.csv"), {r1, r2});  // unordered input

    const std::string text = slurp(tmp.file("two.csv"));
    std::vector<std::string> lines;
    size_t pos = 0;
    while (pos < text.size()) {
        const size_t nl = text.find('\n', pos);
        lines.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    REQUIRE(lines.size() == 3);
    REQUIRE(lines[1].starts_with("run,seg,layerwise,2,"));  // cr 2 sorts first

    // parse back the cr=4 row and compare within 6-significant-digit formatting
    std::vector<std::string> fields;
    std::string row = lines[2];
    pos = 0;
    while (true) {
        const size_t c = row.find(',', pos);
        fields.push_back(row.substr(pos, c - pos));
        if (c == std::string::npos) break;
        pos = c + 1;
    }
    REQUIRE(fields.size() == 10);
    REQUIRE(std::stoi(fields[3]) == 4);
    // 6 significant digits allow up to 5e-6 relative rounding
    REQUIRE(std::stod(fields[5]) == Catch::Approx(r1.dice).epsilon(5e-6));
    REQUIRE(std::stod(fields[6]) == Catch::Approx(r1.mse).epsilon(5e-6));
    REQUIRE(std::stod(fields[9]) == Catch::Approx(r1.speedup).epsilon(5e-6));
}

TEST_CASE("fuzzed headers are rejected without crashing") {
    TempDir tmp;
    const Network net = build_toy_network(Head::sigmoid, 96);
    save_network(tmp.file("w.prnw"), net);
    LabelMap lm(5, 7);
    lm.at(2, 3) = 2;
    lm.at(0, 0) = 1;
    save_labelmap(tmp.file("l.pgm"), lm);
    Tensor fmap({4, 4});
    fmap.at(1, 2) = 3.5f;
    save_floatmap(tmp.file("f.pfm"), fmap);

    struct Target {
        std::string path;
        size_t header_bytes;
        std::function<void(const std::string&)> load;
    };
    const std::vector<Target> targets = {
        {tmp.file("w.prnw"), 12, [](const std::string& p) { load_weights(p); }},
        {tmp.file("l.pgm"), 11, [](const std::string& p) { load_labelmap(p); }},
        {tmp.file("f.pfm"), 12, [](const std::string& p) { load_floatmap(p); }},
    };
    std::mt19937_64 rng(97);
    for (const auto& target : targets) {
        const std::string good = slurp(target.path);
        REQUIRE_NOTHROW(target.load(target.path));
        int rejected = 0, attempts = 0;
        for (size_t i = 0; i < std::min(target.header_bytes, good.size()); ++i) {
            for (uint8_t replacement : {uint8_t(0x00), uint8_t(0xff), uint8_t(good[i] ^ 0x10)}) {
                if (static_cast<uint8_t>(good[i]) == replacement) continue;
                std::string bad = good;
                bad[i] = static_cast<char>(replacement);
                spit(tmp.file("fuzz.bin"), bad);
                ++attempts;
                try {
                    target.load(tmp.file("fuzz.bin"));
                } catch (const IoError&) {
                    ++rejected;
                }
            }
        }
        REQUIRE(attempts > 0);
        REQUIRE(rejected == attempts);  // every header mutation is caught

        // random mutations anywhere must never crash (they may load or throw)
        std::uniform_int_distribution<size_t> pos(0, good.size() - 1);
        for (int rep = 0; rep < 200; ++rep) {
            std::string bad = good;
            bad[pos(rng)] = static_cast<char>(rng());
            spit(tmp.file("fuzz.bin"), bad);
            try {
                target.load(tmp.file("fuzz.bin"));
            } catch (const IoError&) {
            }
        }
    }
}
