#include "helpers.hpp"

#include "tomodiff/volume.hpp"

#include <doctest.h>

#include <numeric>
#include <stdexcept>

using namespace tomodiff;

TEST_CASE("slice_view reads the k-th xy plane") {
    Volume3 zero(Shape3{3, 2, 2});
    const auto p0 = slice_view(static_cast<const Volume3&>(zero), 1);
    CHECK(p0.rows() == 2);
    CHECK(p0.cols() == 2);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 2; ++c) CHECK(p0(r, c) == 0.0);

    std::vector<double> d(12);
    std::iota(d.begin(), d.end(), 0.0);
    const Volume3 v(Shape3{3, 2, 2}, d);
    const auto p = slice_view(v, 2);
    CHECK(p(0, 0) == 8.0);
    CHECK(p(0, 1) == 9.0);
    CHECK(p(1, 0) == 10.0);
    CHECK(p(1, 1) == 11.0);
}

TEST_CASE("slice_view writes through") {
    Volume3 v(Shape3{3, 2, 2});
    slice_view(v, 0)(0, 0) = 5.0;
    CHECK(v.data()[0] == 5.0);
    slice_view(v, 2)(1, 0) = -1.0;
    CHECK(v(2, 1, 0) == -1.0);
}

TEST_CASE("slice_view rejects out-of-range indices") {
    Volume3 v(Shape3{3, 2, 2});
    CHECK_THROWS_AS(slice_view(v, 3), std::out_of_range);
}

TEST_CASE("plane_views shapes") {
    const Volume3 v(Shape3{4, 3, 2});
    const auto ax = plane_views(v, PlaneAxis::axial);
    const auto co = plane_views(v, PlaneAxis::coronal);
    const auto sa = plane_views(v, PlaneAxis::sagittal);
    REQUIRE(ax.size() == 4);
    CHECK((ax[0].rows == 3 && ax[0].cols == 2));
    REQUIRE(co.size() == 3);
    CHECK((co[0].rows == 4 && co[0].cols == 2));
    REQUIRE(sa.size() == 2);
    CHECK((sa[0].rows == 4 && sa[0].cols == 3));
}

TEST_CASE("plane_views picks the right voxels") {
    const Volume3 v = testutil::random_volume(Shape3{4, 3, 5}, 1);
    const auto co = plane_views(v, PlaneAxis::coronal);
    const auto sa = plane_views(v, PlaneAxis::sagittal);
    for (std::size_t z = 0; z < 4; ++z)
        for (std::size_t y = 0; y < 3; ++y)
            for (std::size_t x = 0; x < 5; ++x) {
                CHECK(co[y](z, x) == v(z, y, x));
                CHECK(sa[x](z, y) == v(z, y, x));
            }
}

TEST_CASE("assemble_planes inverts plane_views on every axis") {
    const Volume3 v = testutil::random_volume(Shape3{5, 4, 3}, 2);
    for (PlaneAxis a : {PlaneAxis::axial, PlaneAxis::coronal, PlaneAxis::sagittal}) {
        const Volume3 back = assemble_planes(plane_views(v, a), a);
        CHECK(back.shape() == v.shape());
        CHECK(testutil::bitwise_equal(back.data(), v.data()));
    }
}

TEST_CASE("axial plane_views equal slice_view") {
    const Volume3 v = testutil::random_volume(Shape3{3, 4, 5}, 3);
    const auto ax = plane_views(v, PlaneAxis::axial);
    for (std::size_t k = 0; k < 3; ++k) {
        const auto p = slice_view(v, k);
        for (std::size_t r = 0; r < 4; ++r)
            for (std::size_t c = 0; c < 5; ++c) CHECK(ax[k](r, c) == p(r, c));
    }
}

TEST_CASE("volume constructors validate sizes") {
    CHECK_THROWS(Volume3(Shape3{2, 2, 2}, std::vector<double>(7)));
    CHECK_THROWS(Volume3(Shape3{0, 2, 2}));
    const ComplexVolume3 c(Shape3{2, 3, 4});
    CHECK(c.data().size() == 48);
}

TEST_CASE("finiteness check") {
    Volume3 v(Shape3{2, 2, 2});
    CHECK(v.all_finite());
    v(1, 1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(v.all_finite());
}

TEST_CASE("grid geometry rejects empty dimensions") {
    CHECK_THROWS(GridGeometry(0, 4, 4));
    CHECK(GridGeometry(2, 3, 4).shape() == Shape3{4, 3, 2});
}
