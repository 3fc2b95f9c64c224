#include <deepxsoz/montage.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace deepxsoz;

namespace {

IndependentComponent stack(std::uint32_t n_slices, std::uint32_t h, std::uint32_t w) {
    IndependentComponent ic;
    ic.dims = {n_slices, h, w};
    ic.slices.resize(ic.dims.voxel_count());
    for (std::size_t i = 0; i < ic.slices.size(); ++i) ic.slices[i] = static_cast<float>(i % 97) * 0.5f;
    ic.bold = {0};
    return ic;
}

Image random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> U(0, 1);
    Image img{h, w, std::vector<float>(h * w)};
    for (auto& v : img.pixels) v = U(rng);
    return img;
}

}  // namespace

TEST(Montage, GridPlacementAndNormalisation) {
    const auto ic = stack(12, 5, 7);
    const auto m = render_montage(ic);
    EXPECT_EQ(m.height, 3u * 5u);  // 4 columns, 3 rows
    EXPECT_EQ(m.width, 4u * 7u);
    const float peak = ic.max_activation();
    // Slice 6 sits in row 1, column 2.
    EXPECT_FLOAT_EQ(m.pixels[(5 + 2) * m.width + 14 + 3], ic.slice(6)[2 * 7 + 3] / peak);
    EXPECT_FLOAT_EQ(*std::max_element(m.pixels.begin(), m.pixels.end()), 1.0f);
}

TEST(Montage, UnusedTilesStayBlack) {
    const auto m = render_montage(stack(5, 4, 4));  // 3 columns, 2 rows, last tile unused
    for (std::size_t r = 4; r < 8; ++r)
        for (std::size_t c = 8; c < 12; ++c) EXPECT_EQ(m.pixels[r * m.width + c], 0.0f);
}

TEST(Resize, ConstantImageStaysConstant) {
    Image img{17, 23, std::vector<float>(17 * 23, 0.375f)};
    for (auto [h, w] : {std::pair{4, 5}, {17, 23}, {40, 9}})
        for (float v : resize_bilinear(img, h, w).pixels) EXPECT_NEAR(v, 0.375f, 1e-6);
}

TEST(Resize, IdentityIsExact) {
    const auto img = random_image(9, 13, 1);
    EXPECT_EQ(resize_bilinear(img, 9, 13).pixels, img.pixels);
}

TEST(Resize, CommutesWithMirroring) {
    const auto img = random_image(30, 44, 2);
    Image flipped = img;
    for (std::size_t r = 0; r < img.height; ++r)
        for (std::size_t c = 0; c < img.width; ++c) flipped.pixels[r * img.width + c] = img.pixels[r * img.width + img.width - 1 - c];
    const auto a = resize_bilinear(img, 11, 13), b = resize_bilinear(flipped, 11, 13);
    for (std::size_t r = 0; r < 11; ++r)
        for (std::size_t c = 0; c < 13; ++c) EXPECT_NEAR(a.pixels[r * 13 + c], b.pixels[r * 13 + 12 - c], 1e-6);
}

TEST(Resize, DownscaleAveragesInsteadOfSampling) {
    // A one-pixel checkerboard shrunk 4x must come out close to its mean.
    Image img{64, 64, std::vector<float>(64 * 64)};
    for (std::size_t r = 0; r < 64; ++r)
        for (std::size_t c = 0; c < 64; ++c) img.pixels[r * 64 + c] = static_cast<float>((r + c) % 2);
    for (float v : resize_bilinear(img, 16, 16).pixels) EXPECT_NEAR(v, 0.5f, 0.05f);
}

TEST(Resize, TapsAreNormalised) {
    for (auto [in, out] : {std::pair<std::size_t, std::size_t>{10, 3}, {3, 10}, {270, 32}}) {
        for (const auto& t : detail::triangle_taps(in, out)) {
            double s = 0;
            for (double w : t.weights) s += w;
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
    EXPECT_THROW(resize_bilinear(Image{}, 2, 2), std::invalid_argument);
}

TEST(IcImage, ChannelsAreReplicas) {
    const auto x = ic_image(stack(4, 16, 16), 8, 12, 3);
    ASSERT_EQ(x.size(), 3u * 8u * 12u);
    EXPECT_TRUE(std::equal(x.begin(), x.begin() + 96, x.begin() + 96));
    EXPECT_TRUE(std::equal(x.begin(), x.begin() + 96, x.begin() + 192));
}
