#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "core/checkpoint.hpp"
#include "test_support.hpp"

using namespace fscs;
using namespace testsup;

namespace {

std::vector<unsigned char> slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) {
        path = std::filesystem::temp_directory_path() / name;
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("save -> load -> save produces byte-identical files") {
    TempDir dir("fscs_ckpt_test");
    ModelDesc desc{0.25, 8, 4, 3, Variant::fsoinet};
    Model<float> m = make_model<float>(desc, 7);
    randomize_parameters(m, 8, 0.3);

    const std::string p1 = (dir.path / "a.fsoi").string();
    const std::string p2 = (dir.path / "b.fsoi").string();
    save_checkpoint(p1, m);
    Model<float> loaded = load_checkpoint(p1);
    save_checkpoint(p2, loaded);
    CHECK(slurp(p1) == slurp(p2));

    CHECK(loaded.variant == m.variant);
    CHECK(loaded.channels == m.channels);
    CHECK(loaded.phases.size() == m.phases.size());
    CHECK(loaded.sampling.block_side == m.sampling.block_side);
}

TEST_CASE("reconstruction from a loaded checkpoint is bit-identical") {
    TempDir dir("fscs_ckpt_test2");
    ModelDesc desc{0.25, 8, 4, 2, Variant::fsoinet};
    Model<float> m = make_model<float>(desc, 11);
    randomize_parameters(m, 12, 0.25);
    Rng rng(13);
    Tensor<float> img = rand_tensor_f(rng, {40, 40}, 0, 1);

    Reconstruction<float> before = reconstruct_image(m, img);
    const std::string path = (dir.path / "m.fsoi").string();
    save_checkpoint(path, m);
    Model<float> loaded = load_checkpoint(path);
    Reconstruction<float> after = reconstruct_image(loaded, img);
    CHECK(std::memcmp(before.rec.data(), after.rec.data(),
                      sizeof(float) * static_cast<size_t>(before.rec.numel())) == 0);
    CHECK(std::memcmp(before.init.data(), after.init.data(),
                      sizeof(float) * static_cast<size_t>(before.init.numel())) == 0);
}

TEST_CASE("checkpoint file layout: magic, version, header fields") {
    TempDir dir("fscs_ckpt_test3");
    ModelDesc desc{0.5, 4, 2, 1, Variant::oinet};
    Model<float> m = make_model<float>(desc, 17);
    const std::string path = (dir.path / "m.fsoi").string();
    save_checkpoint(path, m);

    auto bytes = slurp(path);
    REQUIRE(bytes.size() > 32);
    CHECK(std::memcmp(bytes.data(), "FSOI", 4) == 0);
    auto u32 = [&bytes](size_t off) {
        return static_cast<uint32_t>(bytes[off]) | (static_cast<uint32_t>(bytes[off + 1]) << 8) |
               (static_cast<uint32_t>(bytes[off + 2]) << 16) |
               (static_cast<uint32_t>(bytes[off + 3]) << 24);
    };
    CHECK(u32(4) == 1);   // version
    CHECK(u32(8) == 4);   // block_side
    float ratio;
    uint32_t ratio_bits = u32(12);
    std::memcpy(&ratio, &ratio_bits, 4);
    CHECK(ratio == 0.5f);
    CHECK(u32(16) == 2);  // channels
    CHECK(u32(20) == 1);  // phases
    CHECK(u32(24) == 1);  // mode: oinet
    const uint32_t count = u32(28);
    CHECK(count > 0);
    // first record is phi: name_len 3, "phi", rank 2, extents 8 x 16
    CHECK(u32(32) == 3);
    CHECK(std::memcmp(bytes.data() + 36, "phi", 3) == 0);
    CHECK(u32(39) == 2);
    CHECK(u32(43) == 8);
    CHECK(u32(47) == 16);
}

TEST_CASE("named tensor round trip preserves names and payloads") {
    TempDir dir("fscs_ckpt_test4");
    CheckpointHeader h;
    h.block_side = 8;
    h.ratio = 0.25f;
    h.channels = 4;
    h.phases = 1;
    h.variant = Variant::vnet;
    Rng rng(19);
    std::vector<std::pair<std::string, Tensor<float>>> tensors{
        {"alpha", rand_tensor_f(rng, {3, 4})},
        {"beta.w", rand_tensor_f(rng, {2, 2, 3, 3})},
    };
    const std::string path = (dir.path / "t.fsoi").string();
    write_named_tensors(path, h, tensors);
    NamedTensorFile f = read_named_tensors(path);
    REQUIRE(f.tensors.size() == 2);
    CHECK(f.header.variant == Variant::vnet);
    CHECK(max_abs_diff(f.tensors.at("alpha"), tensors[0].second) == 0.0);
    CHECK(max_abs_diff(f.tensors.at("beta.w"), tensors[1].second) == 0.0);
}

TEST_CASE("double-precision models save to the same 32-bit format") {
    TempDir dir("fscs_ckpt_test5");
    ModelDesc desc{0.5, 4, 2, 1, Variant::fsoinet};
    Model<double> m = make_model<double>(desc, 23);
    const std::string p1 = (dir.path / "d.fsoi").string();
    const std::string p2 = (dir.path / "d2.fsoi").string();
    save_checkpoint(p1, m);
    Model<float> loaded = load_checkpoint(p1);
    save_checkpoint(p2, loaded);
    CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("corrupt and incompatible files are rejected") {
    TempDir dir("fscs_ckpt_test6");
    const std::string bad = (dir.path / "bad.fsoi").string();
    {
        std::ofstream os(bad, std::ios::binary);
        os << "NOPE this is not a checkpoint";
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(bad), doctest::Contains("not a checkpoint"),
                         std::runtime_error);

    // truncated: valid header then cut off
    ModelDesc desc{0.5, 4, 2, 1, Variant::fsoinet};
    Model<float> m = make_model<float>(desc, 29);
    const std::string good = (dir.path / "good.fsoi").string();
    save_checkpoint(good, m);
    auto bytes = slurp(good);
    const std::string trunc = (dir.path / "trunc.fsoi").string();
    {
        std::ofstream os(trunc, std::ios::binary);
        os.write(reinterpret_cast<const char*>(bytes.data()),
                 static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(load_checkpoint(trunc), std::runtime_error);
    CHECK_THROWS_AS(load_checkpoint((dir.path / "missing.fsoi").string()), std::runtime_error);
}
