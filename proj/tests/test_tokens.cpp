#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "orthotrack/attention/attention_reg.hpp"
#include "orthotrack/core/errors.hpp"
#include "orthotrack/core/ops.hpp"
#include "orthotrack/masking/masking.hpp"
#include "orthotrack/tokenizer/tokenizer.hpp"
#include "testing/gradcheck.hpp"

using namespace orthotrack;
using events::Planar;
using orthotrack::testing::random_tensor;

namespace {

/// Value encodes its own (channel, y, x) so patch layout can be decoded.
Planar coded_region(std::size_t channels, std::size_t side) {
    Planar p(channels, side, side);
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < side; ++y) {
            for (std::size_t x = 0; x < side; ++x) {
                p(c, y, x) = static_cast<double>(c * 10000 + y * 100 + x);
            }
        }
    }
    return p;
}

PatchEmbedding random_embedding(std::size_t in, std::size_t dim, std::mt19937_64& rng) {
    return {random_tensor({in, dim}, rng, -1, 1, true), random_tensor({1, dim}, rng, -1, 1, true),
            random_tensor({1, dim}, rng, -1, 1, true)};
}

TokenFragment fragment(Modality m, Region r, std::size_t grid, std::size_t dim, double base) {
    TokenFragment f;
    f.modality = m;
    f.region = r;
    std::vector<double> v(grid * grid * dim);
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = base + static_cast<double>(i);
    }
    f.tokens = Tensor({grid * grid, dim}, v, true);
    for (std::size_t i = 0; i < grid * grid; ++i) {
        f.tags.push_back({m, r, static_cast<int>(i / grid), static_cast<int>(i % grid)});
    }
    return f;
}

TokenBatch four_group_batch(std::size_t tg, std::size_t sg, std::size_t dim) {
    return assemble_one_stream({fragment(Modality::Rgb, Region::Template, tg, dim, 0),
                                fragment(Modality::Event, Region::Template, tg, dim, 1000),
                                fragment(Modality::Rgb, Region::Search, sg, dim, 2000),
                                fragment(Modality::Event, Region::Search, sg, dim, 3000)});
}

} // namespace

// ---------------------------------------------------------------- tokenizer

TEST(Tokenizer, PatchMatrixLayoutIsChannelMajorWithinRowMajorGrid) {
    const std::size_t p = 2;
    Planar region = coded_region(3, 4);
    Tensor m = patch_matrix(region, p);
    ASSERT_EQ(m.shape(), (Shape{4, 12}));
    for (std::size_t gr = 0; gr < 2; ++gr) {
        for (std::size_t gc = 0; gc < 2; ++gc) {
            for (std::size_t c = 0; c < 3; ++c) {
                for (std::size_t py = 0; py < p; ++py) {
                    for (std::size_t px = 0; px < p; ++px) {
                        const double expected = region(c, gr * p + py, gc * p + px);
                        EXPECT_EQ(m.at(gr * 2 + gc, c * p * p + py * p + px), expected);
                    }
                }
            }
        }
    }
}

TEST(Tokenizer, RejectsSidesNotDivisibleByPatch) {
    EXPECT_THROW(patch_matrix(Planar(3, 10, 10), 4), InputError);
    EXPECT_THROW(patch_matrix(Planar(3, 8, 12), 4), InputError);
    EXPECT_THROW(patch_matrix(Planar(3, 8, 8), 0), InputError);
}

TEST(Tokenizer, PatchifyMatchesManualProjection) {
    std::mt19937_64 rng(3);
    Planar region = coded_region(2, 4);
    for (auto& v : region.data()) {
        v *= 1e-4;
    }
    PatchEmbedding e = random_embedding(8, 5, rng);
    Tensor pos = random_tensor({4, 5}, rng, -1, 1, true);
    TokenFragment f = patchify(region, 2, e, pos, Modality::Event, Region::Search);
    ASSERT_EQ(f.tokens.shape(), (Shape{4, 5}));
    Tensor patches = patch_matrix(region, 2);
    for (std::size_t t = 0; t < 4; ++t) {
        for (std::size_t d = 0; d < 5; ++d) {
            double acc = 0.0;
            for (std::size_t k = 0; k < 8; ++k) {
                acc += patches.at(t, k) * e.proj.at(k, d);
            }
            acc += e.bias.at(0, d) + pos.at(t, d) + e.modality.at(0, d);
            EXPECT_NEAR(f.tokens.at(t, d), acc, 1e-12);
        }
        EXPECT_EQ(f.tags[t], (TokenTag{Modality::Event, Region::Search, static_cast<int>(t / 2),
                                       static_cast<int>(t % 2)}));
    }
    EXPECT_THROW(patchify(region, 2, e, random_tensor({9, 5}, rng, -1, 1), Modality::Event, Region::Search),
                 DimensionError);
}

TEST(Tokenizer, AssembleProducesCanonicalOrderFromAnyInputOrder) {
    auto ti = fragment(Modality::Rgb, Region::Template, 2, 3, 0);
    auto te = fragment(Modality::Event, Region::Template, 2, 3, 100);
    auto si = fragment(Modality::Rgb, Region::Search, 3, 3, 200);
    auto se = fragment(Modality::Event, Region::Search, 3, 3, 300);
    TokenBatch b = assemble_one_stream({se, ti, si, te});
    ASSERT_EQ(b.size(), 4u + 4u + 9u + 9u);
    EXPECT_EQ(b.tags[0].modality, Modality::Rgb);
    EXPECT_EQ(b.tags[4].modality, Modality::Event);
    EXPECT_EQ(b.tags[8].region, Region::Search);
    EXPECT_EQ(b.tags[17].modality, Modality::Event);
    EXPECT_EQ(b.tokens.at(4, 0), 100.0);
    EXPECT_EQ(b.tokens.at(17, 0), 300.0);
    BlockMap map = block_map(b);
    EXPECT_EQ(map.sizes(), (std::vector<std::size_t>{4, 4, 9, 9}));
    EXPECT_EQ(map.range(Group::SearchRgb), (std::pair<std::size_t, std::size_t>{8, 17}));
}

TEST(Tokenizer, AssembleRejectsDuplicatesAndSupportsEmptyGroups) {
    auto ti = fragment(Modality::Rgb, Region::Template, 2, 3, 0);
    EXPECT_THROW(assemble_one_stream({ti, ti}), InputError);

    TokenFragment empty_events{Modality::Event, Region::Search, Tensor(Shape{0, 3}), {}};
    auto si = fragment(Modality::Rgb, Region::Search, 2, 3, 50);
    TokenBatch b = assemble_one_stream({ti, si, empty_events});
    EXPECT_EQ(b.size(), 8u);
    BlockMap map = block_map(b);
    EXPECT_EQ(map.sizes(), (std::vector<std::size_t>{4, 0, 4, 0}));
    EXPECT_EQ(map.size(Group::SearchEvent), 0u);

    auto two = assemble_two_stream({ti, si, empty_events});
    EXPECT_EQ(two.template_tokens.size(), 4u);
    EXPECT_EQ(two.search_tokens.size(), 4u);
}

TEST(Tokenizer, GradientReachesProjection) {
    std::mt19937_64 rng(11);
    Planar region(2, 4, 4);
    std::uniform_real_distribution<double> u(0, 1);
    for (auto& v : region.data()) {
        v = u(rng);
    }
    PatchEmbedding e = random_embedding(8, 3, rng);
    Tensor pos = random_tensor({4, 3}, rng, -1, 1, true);
    auto loss = [&] {
        auto f = patchify(region, 2, e, pos, Modality::Rgb, Region::Template);
        return sum(mul(f.tokens, f.tokens));
    };
    loss().backward();
    std::vector<Tensor> params{e.proj, e.bias, pos, e.modality};
    auto analytic = orthotrack::testing::collect_grads(params);
    auto numeric = orthotrack::testing::central_differences([&] { return loss().item(); }, params, 1e-6);
    EXPECT_LT(orthotrack::testing::relative_error(analytic, numeric), 1e-7);
}

// ------------------------------------------------------------------ masking

TEST(Masking, CountRoundsHalfUp) {
    EXPECT_EQ(mask_count(0.5, 1), 1u);
    EXPECT_EQ(mask_count(0.25, 2), 1u);
    EXPECT_EQ(mask_count(0.1, 64), 6u);
    EXPECT_EQ(mask_count(0.4, 64), 26u);
    EXPECT_EQ(mask_count(0.0, 64), 0u);
    EXPECT_EQ(mask_count(1.0, 64), 64u);
}

TEST(Masking, CellsPerSideFollowsGranularity) {
    EXPECT_EQ(mask_cells_per_side(16, 1.0 / 8), 8u);
    EXPECT_EQ(mask_cells_per_side(16, 1.0 / 2), 2u);
    EXPECT_EQ(mask_cells_per_side(8, 1.0 / 16), 8u);
    EXPECT_EQ(mask_cells_per_side(4, 1.0), 1u);
    EXPECT_THROW(mask_cells_per_side(8, 1.0 / 3), InputError);
    EXPECT_THROW(mask_cells_per_side(8, 0.0), InputError);
}

TEST(Masking, SampledMasksHaveExactCountsAlignedCells) {
    AugmentationConfig cfg;
    cfg.delta_i = 0.4;
    cfg.delta_e = 0.3;
    cfg.granularity = 1.0 / 4;
    MaskSet m = sample_masks(8, 16, cfg, 5);
    EXPECT_EQ(m.template_rgb.masked_count(), mask_count(0.4, 16) * 4);
    EXPECT_EQ(m.template_event.masked_count(), mask_count(0.3, 16) * 4);
    EXPECT_EQ(m.search_rgb.masked_count(), mask_count(0.4, 16) * 16);
    EXPECT_EQ(m.search_event.masked_count(), mask_count(0.3, 16) * 16);
    // Each 4x4 block of the 16-grid is uniformly masked or visible.
    for (std::size_t br = 0; br < 4; ++br) {
        for (std::size_t bc = 0; bc < 4; ++bc) {
            const bool first = m.search_rgb.is_masked(br * 4, bc * 4);
            for (std::size_t r = 0; r < 4; ++r) {
                for (std::size_t c = 0; c < 4; ++c) {
                    EXPECT_EQ(m.search_rgb.is_masked(br * 4 + r, bc * 4 + c), first);
                }
            }
        }
    }
}

TEST(Masking, SamplingIsDeterministicAndSeedSensitive) {
    AugmentationConfig cfg;
    MaskSet a = sample_masks(8, 16, cfg, 77);
    MaskSet b = sample_masks(8, 16, cfg, 77);
    MaskSet c = sample_masks(8, 16, cfg, 78);
    EXPECT_EQ(a.search_rgb.masked, b.search_rgb.masked);
    EXPECT_EQ(a.template_event.masked, b.template_event.masked);
    EXPECT_NE(a.search_rgb.masked, c.search_rgb.masked);
}

TEST(Masking, SearchOnlyLeavesTemplateVisible) {
    AugmentationConfig cfg;
    cfg.mask_template = false;
    cfg.delta_i = 0.5;
    MaskSet m = sample_masks(8, 8, cfg, 1);
    EXPECT_EQ(m.template_rgb.masked_count(), 0u);
    EXPECT_EQ(m.template_event.masked_count(), 0u);
    EXPECT_GT(m.search_rgb.masked_count(), 0u);
}

TEST(Masking, EveryCellIsEquallyLikely) {
    AugmentationConfig cfg;
    cfg.delta_i = 0.25;
    cfg.granularity = 1.0 / 4;
    std::vector<int> hits(16, 0);
    const int trials = 4000;
    for (int s = 0; s < trials; ++s) {
        MaskSet m = sample_masks(4, 4, cfg, static_cast<std::uint64_t>(s));
        for (std::size_t i = 0; i < 16; ++i) {
            hits[i] += m.search_rgb.masked[i] ? 1 : 0;
        }
    }
    // Binomial(4000, 0.25): sd ~ 27; allow 5 sd.
    for (int h : hits) {
        EXPECT_NEAR(h, trials / 4, 140);
    }
}

TEST(Masking, OneStreamPopsMaskedTokensKeepingSurvivorsBitwise) {
    TokenBatch b = four_group_batch(2, 2, 3);
    MaskSet m = MaskSet::none(2, 2);
    m.template_event.masked[1] = true;
    m.search_rgb.masked[0] = true;
    m.search_rgb.masked[3] = true;
    TokenBatch out = apply_one_stream(b, m);
    ASSERT_EQ(out.size(), 13u);
    std::size_t k = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        const auto& tag = b.tags[i];
        if (m.get(tag.modality, tag.region).is_masked(tag.row, tag.col)) {
            continue;
        }
        EXPECT_EQ(out.tags[k], tag);
        for (std::size_t d = 0; d < 3; ++d) {
            EXPECT_EQ(out.tokens.at(k, d), b.tokens.at(i, d));
        }
        ++k;
    }
    EXPECT_EQ(block_map(out).sizes(), (std::vector<std::size_t>{4, 3, 2, 4}));

    sum(out.tokens).backward();
    const auto g = b.tokens.grad();
    // Row 5 is T_E cell 1 (masked): zero gradient; row 4 survives.
    EXPECT_EQ(g[5 * 3], 0.0);
    EXPECT_EQ(g[4 * 3], 1.0);
}

TEST(Masking, OneStreamRejectsFullyMaskedInput) {
    TokenBatch b = four_group_batch(2, 2, 3);
    MaskSet m = MaskSet::none(2, 2);
    for (auto* g : {&m.template_rgb, &m.template_event, &m.search_rgb, &m.search_event}) {
        g->masked.assign(4, true);
    }
    EXPECT_THROW(apply_one_stream(b, m), InputError);
}

TEST(Masking, NoMaskReturnsIdenticalBatch) {
    TokenBatch b = four_group_batch(2, 2, 3);
    TokenBatch out = apply_one_stream(b, MaskSet::none(2, 2));
    EXPECT_EQ(out.tokens.node(), b.tokens.node());
}

TEST(Masking, TwoStreamFusionCases) {
    Tensor rgb({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    Tensor evt({4, 2}, {10, 20, 30, 40, 50, 60, 70, 80});
    GridMask mr{2, {false, true, false, true}};
    GridMask me{2, {false, false, true, true}};
    Tensor f = apply_two_stream(rgb, evt, mr, me);
    const std::vector<double> expected{5.5, 11, 30, 40, 5, 6, 0, 0};
    for (std::size_t i = 0; i < expected.size(); ++i) {
        EXPECT_EQ(f.values()[i], expected[i]);
    }
    EXPECT_THROW(apply_two_stream(rgb, Tensor({3, 2}), mr, me), DimensionError);
    EXPECT_THROW(apply_two_stream(rgb, evt, GridMask{1, {false}}, me), DimensionError);
}

TEST(Masking, ConfigValidation) {
    AugmentationConfig c;
    c.delta_i = 1.5;
    EXPECT_THROW(c.validate(), InputError);
    c = {};
    c.granularity = 0.0;
    EXPECT_THROW(c.validate(), InputError);
    c = {};
    c.alpha = -1;
    EXPECT_THROW(c.validate(), InputError);
    EXPECT_NO_THROW(AugmentationConfig::two_stream_defaults().validate());
}

// ---------------------------------------------------------- attention reg

namespace {

AttentionRecord record_from(const BlockMap& map, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = map.total();
    Tensor logits = random_tensor({n, n}, rng, -2, 2, true);
    return {1, 0, softmax_rows(logits), map};
}

BlockMap one_stream_map(std::size_t t, std::size_t s) {
    return BlockMap({Group::TemplateRgb, Group::TemplateEvent, Group::SearchRgb, Group::SearchEvent},
                    {t, t, s, s});
}

} // namespace

TEST(AttentionReg, ExtractBlockReturnsSubmatrix) {
    AttentionRecord rec = record_from(one_stream_map(2, 3), 4);
    auto b = extract_block(rec, Group::SearchRgb, Group::TemplateEvent);
    ASSERT_TRUE(b.has_value());
    ASSERT_EQ(b->shape(), (Shape{3, 2}));
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 2; ++c) {
            EXPECT_EQ(b->at(r, c), rec.matrix.at(4 + r, 2 + c));
        }
    }
    EXPECT_THROW(extract_block(rec, Group::Search, Group::Template), InputError);
}

TEST(AttentionReg, EmptyGroupsAreSkipped) {
    AttentionRecord rec = record_from(BlockMap({Group::TemplateRgb, Group::TemplateEvent, Group::SearchRgb,
                                                Group::SearchEvent},
                                               {2, 0, 3, 3}),
                                      5);
    EXPECT_FALSE(extract_block(rec, Group::SearchRgb, Group::TemplateEvent).has_value());
    auto blocks = select_blocks(rec, StreamKind::OneStream);
    ASSERT_EQ(blocks.size(), 3u);
    EXPECT_EQ(blocks[0].label(), "S_I->S_E");
}

TEST(AttentionReg, SelectsCrossModalBlocks) {
    auto blocks = select_blocks(record_from(one_stream_map(2, 3), 6), StreamKind::OneStream);
    ASSERT_EQ(blocks.size(), 4u);
    EXPECT_EQ(blocks[0].label(), "S_I->T_E");
    EXPECT_EQ(blocks[1].label(), "S_I->S_E");
    EXPECT_EQ(blocks[2].label(), "S_E->T_I");
    EXPECT_EQ(blocks[3].label(), "S_E->S_I");
    AttentionRecord two = record_from(BlockMap({Group::Template, Group::Search}, {4, 9}), 7);
    auto sel = select_blocks(two, StreamKind::TwoStream);
    ASSERT_EQ(sel.size(), 1u);
    EXPECT_EQ(sel[0].matrix.shape(), (Shape{9, 4}));
}

TEST(AttentionReg, TargetRestrictionGathersInsideCells) {
    std::mt19937_64 rng(8);
    Tensor block = random_tensor({16, 4}, rng, 0, 1, true);
    GridBox sbox{1.0, 1.0, 3.0, 2.0}; // centers (1.5,1.5), (2.5,1.5) inside
    GridBox tbox{0.0, 0.0, 1.0, 2.0}; // centers (0.5,0.5), (0.5,1.5)
    EXPECT_EQ(cells_inside(4, sbox), (std::vector<std::size_t>{5, 6}));
    EXPECT_EQ(cells_inside(2, tbox), (std::vector<std::size_t>{0, 2}));
    auto m = mask_non_target(block, 4, sbox, 2, tbox);
    ASSERT_TRUE(m.has_value());
    ASSERT_EQ(m->shape(), (Shape{2, 2}));
    EXPECT_EQ(m->at(0, 0), block.at(5, 0));
    EXPECT_EQ(m->at(1, 1), block.at(6, 2));
    EXPECT_FALSE(mask_non_target(block, 4, GridBox{0, 0, 0.2, 0.2}, 2, tbox).has_value());

    Tensor z = zero_non_target(block, 4, sbox, 2, tbox);
    sum(mul(z, z)).backward();
    for (std::size_t r = 0; r < 16; ++r) {
        for (std::size_t c = 0; c < 4; ++c) {
            const bool inside = (r == 5 || r == 6) && (c == 0 || c == 2);
            EXPECT_EQ(block.grad()[r * 4 + c] == 0.0, !inside);
        }
    }
    EXPECT_THROW(mask_non_target(block, 3, sbox, 2, tbox), DimensionError);
}

TEST(AttentionReg, RankLossOnKnownSpectra) {
    Tensor a({2, 2}, {3, 0, 0, 1});
    Tensor b({2, 3}, {0, 2, 0, 0, 0, 0});
    // a: |3-0.5|+|1-0.5| = 3; b: |2-0.5|+|0-0.5| = 2; mean 2.5.
    EXPECT_NEAR(high_rank_loss({{"a", a}, {"b", b}}, 0.5).item(), 2.5, 1e-12);
    // Default threshold 1/sqrt(2) for both.
    const double t = 1.0 / std::sqrt(2.0);
    EXPECT_NEAR(high_rank_loss({{"a", a}}, std::nullopt).item(), (3 - t) + (1 - t), 1e-12);
    EXPECT_DOUBLE_EQ(block_tau(9, 4, std::nullopt), 0.5);
    EXPECT_DOUBLE_EQ(block_tau(9, 4, 0.3), 0.3);
    EXPECT_THROW(high_rank_loss({}, 0.5), InputError);
}

TEST(AttentionReg, RankLossErrorNamesBlock) {
    Tensor bad({2, 2}, {std::nan(""), 0, 0, 1});
    try {
        high_rank_loss({{"layer 1 head 0 S_I->T_E", bad}}, 0.5);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("layer 1 head 0 S_I->T_E"), std::string::npos);
    }
}

TEST(AttentionReg, PickLayerIsDeterministicAndUniform) {
    std::vector<int> counts(4, 0);
    for (std::uint64_t s = 0; s < 4000; ++s) {
        const int l = pick_layer(4, s, 9);
        ASSERT_GE(l, 0);
        ASSERT_LT(l, 4);
        EXPECT_EQ(l, pick_layer(4, s, 9));
        ++counts[static_cast<std::size_t>(l)];
    }
    for (int c : counts) {
        EXPECT_NEAR(c, 1000, 150);
    }
    EXPECT_THROW(pick_layer(0, 0, 0), InputError);
}

TEST(AttentionReg, DiagnosticsReportSpectrumAndGram) {
    AttentionRecord rec = record_from(one_stream_map(2, 3), 10);
    auto diags = diagnose(rec, StreamKind::OneStream);
    ASSERT_EQ(diags.size(), 4u);
    for (const auto& d : diags) {
        double s2 = 0.0;
        for (double s : d.sigma) {
            s2 += s * s;
        }
        EXPECT_NEAR(d.stable_rank, s2 / (d.sigma[0] * d.sigma[0]), 1e-12);
        double trace = 0.0;
        for (std::size_t i = 0; i < d.gram.rows(); ++i) {
            trace += d.gram(i, i);
        }
        EXPECT_NEAR(trace, s2, 1e-12);
    }
}

TEST(AttentionReg, DumpRoundTrips) {
    AttentionRecord rec = record_from(one_stream_map(2, 3), 12);
    rec.layer = 3;
    rec.head = 1;
    std::stringstream ss;
    write_attention(ss, rec);
    AttentionRecord back = read_attention(ss);
    EXPECT_EQ(back.layer, 3);
    EXPECT_EQ(back.head, 1);
    EXPECT_EQ(back.block_map, rec.block_map);
    ASSERT_EQ(back.matrix.shape(), rec.matrix.shape());
    for (std::size_t i = 0; i < rec.matrix.numel(); ++i) {
        EXPECT_EQ(back.matrix.values()[i], rec.matrix.values()[i]);
    }
    std::stringstream csv;
    write_sigma_csv(csv, diagnose(rec, StreamKind::OneStream));
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "layer,head,block,sv_index,sigma");
}
