#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "salibi/dataset.hpp"
#include "salibi/rng.hpp"
#include "salibi/tiles.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

using namespace salibi;

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const auto n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    return cov / std::sqrt(va * vb);
}

std::filesystem::path temp_dir(const char* name) {
    auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(p);
    return p;
}

} // namespace

TEST_CASE("lonlat_to_tile hand values") {
    CHECK(lonlat_to_tile(12.0, 48.0, 0) == TileId{0, 0, 0});
    CHECK(lonlat_to_tile(-170.0, -80.0, 0) == TileId{0, 0, 0});
    CHECK(lonlat_to_tile(0.0, 0.0, 1) == TileId{1, 1, 1});
    CHECK(lonlat_to_tile(-179.9, 0.0, 2) == TileId{2, 0, 2});
    CHECK_THROWS_AS(lonlat_to_tile(0.0, 86.0, 5), std::range_error);
    CHECK_THROWS_AS(lonlat_to_tile(0.0, -86.0, 5), std::range_error);
    CHECK_THROWS_AS(lonlat_to_tile(181.0, 0.0, 5), std::range_error);
}

TEST_CASE("tile children and parent") {
    TileId root{0, 0, 0};
    auto kids = tile_children(root);
    std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
    for (const auto& k : kids) {
        CHECK(k.z == 1);
        seen.insert({k.x, k.y});
        CHECK(tile_parent(k) == root);
    }
    CHECK(seen.size() == 4);

    // children of children form 16 distinct tiles at z+2
    std::set<std::pair<std::uint32_t, std::uint32_t>> grand;
    for (const auto& k : kids)
        for (const auto& g : tile_children(k)) {
            CHECK(g.z == 2);
            grand.insert({g.x, g.y});
            CHECK(tile_parent(g) == k);
        }
    CHECK(grand.size() == 16);

    CHECK_THROWS_AS(tile_children(TileId{30, 0, 0}), std::range_error);
}

TEST_CASE("tile bbox center maps back to the same tile") {
    Rng rng(2024);
    for (std::uint32_t z : {5u, 10u, 15u, 17u}) {
        const std::uint64_t n = std::uint64_t{1} << z;
        for (int i = 0; i < 250; ++i) {
            TileId t{z, static_cast<std::uint32_t>(rng.below(n)),
                     static_cast<std::uint32_t>(rng.below(n))};
            auto bb = tile_to_bbox(t);
            const double lon = 0.5 * (bb.west + bb.east);
            const double lat = 0.5 * (bb.south + bb.north);
            CHECK(lonlat_to_tile(lon, lat, z) == t);
        }
    }
}

TEST_CASE("pack_radar pinned values and clamping") {
    Raster vv = Raster::zeros(1, 2, 2);
    Raster vh = Raster::zeros(1, 2, 2);
    Raster8 zero = pack_radar(vv, vh);
    for (auto b : zero.data) CHECK(b == 0);

    vv.at(0, 0, 0) = 500.0f;  // 500 * 0.256 = 128
    vv.at(0, 0, 1) = 4000.0f; // clamps to 255
    vh.at(0, 1, 1) = 1000.0f; // exactly 256 -> clamps to 255
    Raster8 p = pack_radar(vv, vh);
    CHECK(p.channels == 3);
    const std::size_t plane = 4;
    for (std::size_t i = 0; i < plane; ++i) CHECK(p.data[i] == 0); // red always empty
    CHECK(p.data[plane + 0] == 128);
    CHECK(p.data[plane + 1] == 255);
    CHECK(p.data[2 * plane + 3] == 255);

    Raster wrong = Raster::zeros(1, 2, 3);
    CHECK_THROWS_AS(pack_radar(vv, wrong), std::invalid_argument);
}

TEST_CASE("pack_radar is monotone and bounded by half-step rounding") {
    Rng rng(7);
    Raster vv1 = Raster::zeros(1, 8, 8), vv2 = Raster::zeros(1, 8, 8), vh = Raster::zeros(1, 8, 8);
    for (std::size_t i = 0; i < 64; ++i) {
        vv1.data[i] = static_cast<float>(rng.uniform(0, 900));
        vv2.data[i] = vv1.data[i] + static_cast<float>(rng.uniform(0, 90));
    }
    Raster8 p1 = pack_radar(vv1, vh), p2 = pack_radar(vv2, vh);
    const double step = 1000.0 / 256.0;
    for (std::size_t i = 0; i < 64; ++i) {
        CHECK(p1.data[64 + i] <= p2.data[64 + i]);
        const double recon = static_cast<double>(p1.data[64 + i]) * step;
        CHECK(std::abs(recon - static_cast<double>(vv1.data[i])) <= 1000.0 / 512.0 + 0.5 * step);
    }
}

TEST_CASE("synth_triplet is deterministic and well formed") {
    TileId t{10, 511, 340};
    AlignedTriplet a = synth_triplet(t, 3, 42, 16);
    AlignedTriplet b = synth_triplet(t, 3, 42, 16);
    CHECK(a.radar.data == b.radar.data);
    CHECK(a.lores.data == b.lores.data);
    CHECK(a.hires.data == b.hires.data);
    CHECK(a.size() == 16);
    CHECK(a.hires.height == 32);
    a.validate();

    AlignedTriplet c = synth_triplet(t, 3, 43, 16);
    CHECK(c.lores.data != a.lores.data);
    for (float v : a.lores.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    for (float v : a.hires.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    CHECK_THROWS_AS(synth_triplet(t, 0, 1, 7), std::invalid_argument);
}

TEST_CASE("downsampled hires tracks lores, distinct seeds decorrelate") {
    TileId t{12, 100, 200};
    const std::size_t S = 32;
    AlignedTriplet a = synth_triplet(t, 1, 7, S);

    std::vector<double> lo, hi_ds;
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t y = 0; y < S; ++y)
            for (std::size_t x = 0; x < S; ++x) {
                lo.push_back(a.lores.at(ch, y, x));
                const double avg = (a.hires.at(ch, 2 * y, 2 * x) + a.hires.at(ch, 2 * y, 2 * x + 1) +
                                    a.hires.at(ch, 2 * y + 1, 2 * x) +
                                    a.hires.at(ch, 2 * y + 1, 2 * x + 1)) /
                                   4.0;
                hi_ds.push_back(avg);
            }
    CHECK(pearson(lo, hi_ds) > 0.8);

    AlignedTriplet b = synth_triplet(t, 1, 8, S);
    std::vector<double> lo_b(b.lores.data.begin(), b.lores.data.end());
    std::vector<double> lo_a(a.lores.data.begin(), a.lores.data.end());
    CHECK(std::abs(pearson(lo_a, lo_b)) < 0.3);

    // radar correlates with lores structure but is not a copy of it
    std::vector<double> lum, vv;
    for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x) {
            lum.push_back((a.lores.at(0, y, x) + a.lores.at(1, y, x) + a.lores.at(2, y, x)) / 3.0);
            vv.push_back(a.radar.at(0, y, x));
        }
    CHECK(pearson(lum, vv) > 0.5);
    CHECK(pearson(lum, vv) < 0.999);
}

TEST_CASE("dataset container round-trips bitwise") {
    auto dir = temp_dir("salibi_ds_roundtrip");
    std::vector<AlignedTriplet> samples;
    Rng rng(5);
    for (int i = 0; i < 10; ++i)
        samples.push_back(synth_triplet(TileId{9, static_cast<std::uint32_t>(rng.below(512)),
                                               static_cast<std::uint32_t>(rng.below(512))},
                                        static_cast<std::uint32_t>(i % 4), 99, 16));
    DatasetManifest m = write_dataset(samples, dir, 99);
    CHECK(m.count == 10);

    DatasetReader reader(dir);
    CHECK(reader.count() == 10);
    CHECK(reader.manifest().seed == 99);
    for (std::size_t i = 0; i < 10; ++i) {
        AlignedTriplet back = reader.read(i);
        CHECK(back.tile == samples[i].tile);
        CHECK(back.class_id == samples[i].class_id);
        CHECK(back.radar.data == samples[i].radar.data);
        CHECK(back.lores.data == samples[i].lores.data);
        CHECK(back.hires.data == samples[i].hires.data);
    }
    CHECK_THROWS_AS(reader.read(10), std::out_of_range);
    std::filesystem::remove_all(dir);
}

TEST_CASE("empty dataset is valid with count 0") {
    auto dir = temp_dir("salibi_ds_empty");
    DatasetManifest m = write_dataset({}, dir, 1);
    CHECK(m.count == 0);
    DatasetReader reader(dir);
    CHECK(reader.count() == 0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("corrupt containers are rejected with format errors") {
    auto dir = temp_dir("salibi_ds_corrupt");
    std::vector<AlignedTriplet> samples{synth_triplet(TileId{5, 3, 3}, 0, 1, 16)};
    write_dataset(samples, dir, 1);

    SUBCASE("wrong count in manifest") {
        std::ifstream in(dir / "manifest.json");
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        auto pos = text.find("\"count\": 1");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 10, "\"count\": 2");
        std::ofstream(dir / "manifest.json", std::ios::trunc) << text;
        CHECK_THROWS_AS(DatasetReader{dir}, FormatError);
    }
    SUBCASE("bad format magic") {
        std::ifstream in(dir / "manifest.json");
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        auto pos = text.find("salibi-dataset");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 14, "something-else");
        std::ofstream(dir / "manifest.json", std::ios::trunc) << text;
        CHECK_THROWS_AS(DatasetReader{dir}, FormatError);
    }
    SUBCASE("truncated samples.bin") {
        const auto full = std::filesystem::file_size(dir / "samples.bin");
        std::filesystem::resize_file(dir / "samples.bin", full - 8);
        CHECK_THROWS_AS(DatasetReader{dir}, FormatError);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("record size accounting") {
    // 4 header words + (2 + 3 + 12) * S^2 floats
    CHECK(triplet_record_bytes(16) == 16 + 4 * 17 * 256);
    auto dir = temp_dir("salibi_ds_size");
    std::vector<AlignedTriplet> samples;
    for (int i = 0; i < 3; ++i)
        samples.push_back(synth_triplet(TileId{4, 1, static_cast<std::uint32_t>(i)}, 0, 2, 16));
    write_dataset(samples, dir, 2);
    CHECK(std::filesystem::file_size(dir / "samples.bin") == 3 * triplet_record_bytes(16));
    std::filesystem::remove_all(dir);
}
