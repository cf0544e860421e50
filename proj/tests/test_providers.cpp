#include <gtest/gtest.h>

#include "support.hpp"

using namespace vfr;
using vfr::testing::expect_code;
using vfr::testing::TempDir;

TEST(ChatMessage, RejectsEmptyContent) {
  expect_code(ErrorCode::PreconditionViolated, [] { ChatMessage(ChatRole::User, ""); });
}

TEST(Fingerprint, DimPresentExactlyForEmbedders) {
  expect_code(ErrorCode::PreconditionViolated, [] { ProviderFingerprint(ProviderKind::Chat, "e", "m", 8); });
  expect_code(ErrorCode::PreconditionViolated,
              [] { ProviderFingerprint(ProviderKind::TextEmbed, "e", "m", std::nullopt); });
  const ProviderFingerprint fp(ProviderKind::ImageEmbed, "http://x", "clip", 512);
  EXPECT_EQ(fingerprint_from_json(to_json(fp)), fp);
  EXPECT_EQ(to_json(fp).at("provider_kind"), "image_embed");
}

TEST(MockChat, PingGolden) {
  mock::MockChat chat(7);
  const std::vector<ChatMessage> msgs{{ChatRole::User, "ping"}};
  EXPECT_EQ(chat.chat(msgs, 0.0), "pong");
  EXPECT_EQ(chat.chat(msgs, 0.0), chat.chat(msgs, 0.0));
}

TEST(MockChat, Preconditions) {
  mock::MockChat chat(7);
  expect_code(ErrorCode::PreconditionViolated, [&] { chat.chat({}, 0.0); });
  const std::vector<ChatMessage> ends_with_assistant{{ChatRole::User, "hi"}, {ChatRole::Assistant, "yo"}};
  expect_code(ErrorCode::PreconditionViolated, [&] { chat.chat(ends_with_assistant, 0.0); });
}

TEST(MockChat, ContextRepliesParseAndMentionTheClass) {
  mock::MockChat chat(3);
  const std::string prompt = build_context_prompt("Pine Warbler", MetaCategory("bird", 3), 100);
  const std::vector<ChatMessage> msgs{{ChatRole::User, prompt}};
  const auto sentences = parse_name_list(chat.chat(msgs, 0.7));
  ASSERT_EQ(sentences.size(), 100u);
  std::set<std::string> unique(sentences.begin(), sentences.end());
  EXPECT_EQ(unique.size(), 100u);
  for (const auto& s : sentences) EXPECT_TRUE(text::contains_ci(s, "Pine Warbler")) << s;
}

TEST(MockChat, SeedChangesGeneration) {
  const std::string prompt = build_context_prompt("Blue Jay", MetaCategory("bird", 3), 10);
  const std::vector<ChatMessage> msgs{{ChatRole::User, prompt}};
  mock::MockChat a(1), b(2);
  EXPECT_NE(a.chat(msgs, 0.7), b.chat(msgs, 0.7));
}

TEST(MockVqa, SidecarAnswersAndDeterminism) {
  TempDir dir;
  const auto img = vfr::testing::mock_image(dir.path(), "a.img", {{"category", "bird"}, {"color", "yellow"}});
  mock::MockVqa vqa(5);
  const PromptPack pack;
  EXPECT_EQ(vqa.vqa(img, pack.meta_question), "bird");
  EXPECT_EQ(vqa.vqa(img, fill_category(pack.attribute_questions[0], "bird")), "color: yellow");
  const std::string q = fill_category(pack.attribute_questions[1], "bird");
  EXPECT_EQ(vqa.vqa(img, q), vqa.vqa(img, q));
}

TEST(MockVqa, UnreadableImage) {
  mock::MockVqa vqa(5);
  expect_code(ErrorCode::ImageUnreadable, [&] { vqa.vqa(ImageRef("/nonexistent/x.img"), "what?"); });
}

TEST(MockVqa, PlainImagesGetHashedAnswers) {
  TempDir dir;
  vfr::testing::write_file(dir / "raw.jpg", std::string("\xff\xd8\xff\xe0 not really a jpeg", 24));
  mock::MockVqa vqa(5);
  const ImageRef img(dir / "raw.jpg");
  const auto answer = vqa.vqa(img, PromptPack{}.meta_question);
  const auto& bank = mock::detail::generic_answers();
  EXPECT_NE(std::find(bank.begin(), bank.end(), answer), bank.end());
}

TEST(MockTextEmbedder, DeterministicUnitVectorsOfConfiguredDim) {
  mock::MockTextEmbedder e("m", 64, 1);
  const std::vector<std::string> in{"a cat", "a cat", "a dog"};
  const auto out = e.embed_text(in);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0], out[1]);
  EXPECT_NE(out[0], out[2]);
  for (const auto& v : out) {
    EXPECT_EQ(v.dim(), 64u);
    EXPECT_NEAR(l2_norm(v), 1.0, 1e-12);
  }
}

TEST(MockTextEmbedder, BatchEqualsSingles) {
  mock::MockTextEmbedder e("m", 16, 9);
  const std::vector<std::string> in{"x", "yy", "zzz"};
  const auto batch = e.embed_text(in);
  for (std::size_t i = 0; i < in.size(); ++i) EXPECT_EQ(batch[i], embed_one(e, in[i]));
}

TEST(MockTextEmbedder, OrderPreservedUnderPermutation) {
  mock::MockTextEmbedder e("m", 8, 2);
  std::vector<std::string> in{"alpha", "beta", "gamma", "delta", "epsilon"};
  std::map<std::string, EmbeddingVector> reference;
  const auto base = e.embed_text(in);
  for (std::size_t i = 0; i < in.size(); ++i) reference.emplace(in[i], base[i]);
  vfr::testing::Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(in.begin(), in.end(), rng);
    const auto out = e.embed_text(in);
    for (std::size_t i = 0; i < in.size(); ++i) EXPECT_EQ(out[i], reference.at(in[i]));
  }
}

TEST(MockTextEmbedder, RejectsEmptyInputs) {
  mock::MockTextEmbedder e("m", 8);
  expect_code(ErrorCode::PreconditionViolated, [&] { e.embed_text({}); });
  const std::vector<std::string> blank{""};
  expect_code(ErrorCode::PreconditionViolated, [&] { e.embed_text(blank); });
}

TEST(MockImageEmbedder, IdentityAugmentationMatchesRaw) {
  TempDir dir;
  const auto img = vfr::testing::mock_image(dir.path(), "i.img");
  mock::MockImageEmbedder e("clip", 32, 0);
  EXPECT_EQ(e.embed_image(img, std::nullopt), e.embed_image(img, AugmentationParams::identity()));
}

TEST(MockImageEmbedder, DistinctSeedsGiveDistinctViews) {
  TempDir dir;
  const auto img = vfr::testing::mock_image(dir.path(), "i.img");
  mock::MockImageEmbedder e("clip", 32, 0);
  const auto hash = image_content_hash(img);
  const auto a = augmentation_at(hash, 1, 0);
  const auto b = augmentation_at(hash, 2, 0);
  ASSERT_NE(a, b);
  EXPECT_NE(e.embed_image(img, a), e.embed_image(img, b));
  EXPECT_EQ(e.embed_image(img, a), e.embed_image(img, a));
  EXPECT_EQ(e.augmented_calls(), 4u);
}

TEST(MockImageEmbedder, BadCropRejected) {
  TempDir dir;
  const auto img = vfr::testing::mock_image(dir.path(), "i.img");
  mock::MockImageEmbedder e("clip", 8);
  AugmentationParams bad;
  bad.x0 = 0.8;
  bad.x1 = 0.2;
  expect_code(ErrorCode::PreconditionViolated, [&] { e.embed_image(img, bad); });
}

TEST(MockImageEmbedder, ContentAddressedNotPathAddressed) {
  TempDir dir;
  vfr::testing::write_file(dir / "a.img", "MOCKIMG\nsame\n");
  vfr::testing::write_file(dir / "b.img", "MOCKIMG\nsame\n");
  mock::MockImageEmbedder e("clip", 8);
  EXPECT_EQ(e.embed_image(ImageRef(dir / "a.img"), std::nullopt),
            e.embed_image(ImageRef(dir / "b.img"), std::nullopt));
}

TEST(Retry, BackoffDoublesAndGivesUp) {
  std::vector<long> sleeps;
  RetryPolicy policy;
  policy.sleep = [&](std::chrono::milliseconds d) { sleeps.push_back(d.count()); };
  int attempts = 0;
  expect_code(ErrorCode::TransportError, [&] {
    with_retry(policy, [&]() -> int {
      ++attempts;
      throw TransientFailure{"down"};
    });
  });
  EXPECT_EQ(attempts, 4);
  EXPECT_EQ(sleeps, (std::vector<long>{500, 1000, 2000}));
}

TEST(Retry, RecoversAfterTransientFailures) {
  RetryPolicy policy;
  policy.sleep = nullptr;
  int attempts = 0;
  const int v = with_retry(policy, [&] {
    if (++attempts < 3) throw TransientFailure{"flaky"};
    return 42;
  });
  EXPECT_EQ(v, 42);
  EXPECT_EQ(attempts, 3);
}

TEST(Retry, NonTransientErrorsPassStraightThrough) {
  RetryPolicy policy;
  policy.sleep = nullptr;
  int attempts = 0;
  expect_code(ErrorCode::RequestRejected, [&] {
    with_retry(policy, [&]() -> int {
      ++attempts;
      throw Error(ErrorCode::RequestRejected, "400");
    });
  });
  EXPECT_EQ(attempts, 1);
}
