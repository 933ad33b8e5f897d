#include <gtest/gtest.h>

#include <filesystem>
#include <thread>

#include "support.hpp"

using namespace attriq;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::path(::testing::TempDir()) / "attriq_datasets" / name;
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Generator, SameSeedSameBytes) {
  auto cfg = GenConfig::defaults(CorpusKind::table);
  cfg.seed = 3;
  EXPECT_EQ(dataset_jsonl(generate_synthetic(cfg).instances), dataset_jsonl(generate_synthetic(cfg).instances));
  auto other = cfg;
  other.seed = 4;
  EXPECT_NE(dataset_jsonl(generate_synthetic(cfg).instances), dataset_jsonl(generate_synthetic(other).instances));
}

TEST(Generator, DefaultCountsPerTemplate) {
  EXPECT_EQ(attriq::testing::table_corpus().instances.size(), 196u);
  EXPECT_EQ(attriq::testing::classifier_corpus().instances.size(), 160u);
  for (const auto& in : attriq::testing::classifier_corpus().instances) EXPECT_FALSE(in.table);
}

TEST(Generator, CountOnlyCorpusEndsInCount) {
  GenConfig cfg;
  cfg.counts = {{"count", 30}};
  for (const auto& in : generate_synthetic(cfg).instances) {
    ASSERT_TRUE(in.gold_program);
    EXPECT_EQ(in.gold_program->back().op, Operator::count);
    EXPECT_TRUE(in.gold_answer.is_scalar());
  }
}

TEST(Generator, GoldProgramsReproduceGold) {
  for (const auto& in : attriq::testing::table_corpus().instances) {
    ASSERT_TRUE(in.table && in.gold_program) << in.id;
    EXPECT_TRUE(answers_match(execute(*in.gold_program, *in.table, in.question), in.gold_answer)) << in.id;
    ASSERT_TRUE(in.pos_tags);
    EXPECT_EQ(in.pos_tags->size(), in.question.size());
  }
}

TEST(Generator, RejectsBadConfig) {
  GenConfig cfg;
  cfg.counts = {{"median", 3}};
  EXPECT_THROW(generate_synthetic(cfg), DataError);
  cfg = GenConfig::defaults(CorpusKind::table);
  cfg.max_rows = 11;
  EXPECT_THROW(generate_synthetic(cfg), DataError);
  cfg = GenConfig::defaults(CorpusKind::table);
  cfg.max_cols = 5;
  EXPECT_THROW(generate_synthetic(cfg), DataError);
}

TEST(Generator, VocabularyCoversQuestionsAndColumns) {
  const auto& ds = attriq::testing::table_corpus();
  for (const auto& in : ds.instances) {
    for (const auto& t : in.question) EXPECT_TRUE(ds.vocab.find(t)) << t;
    for (const auto& c : in.table->columns) EXPECT_TRUE(ds.vocab.find(column_token(c))) << c;
  }
}

TEST(Jsonl, RoundTripPreservesEverything) {
  fs::path p = scratch("round") / "nested" / "corpus.jsonl";
  const auto& ds = attriq::testing::table_corpus();
  save_dataset(ds, p);
  Dataset back = load_dataset(p);
  EXPECT_EQ(back.instances, ds.instances);
  EXPECT_EQ(back.vocab.tokens(), ds.vocab.tokens());
  EXPECT_EQ(read_file(p), dataset_jsonl(ds.instances));
}

TEST(Jsonl, EmptyFileGivesEmptyDataset) {
  fs::path p = scratch("empty") / "empty.jsonl";
  write_file(p, "");
  Dataset ds = load_dataset(p);
  EXPECT_TRUE(ds.instances.empty());
  EXPECT_EQ(ds.vocab.size(), Vocabulary::kReserved);
}

TEST(Jsonl, ErrorsNameFileAndLine) {
  fs::path p = scratch("bad") / "bad.jsonl";
  write_file(p, R"({"id":"a","question":["x"],"gold_answer":["y"]})"
                "\n\n"
                R"({"id":"b","question":["x"]})"
                "\n");
  try {
    load_dataset(p);
    FAIL() << "expected a data error";
  } catch (const DataError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find(p.string() + ":3:"), std::string::npos) << msg;
    EXPECT_NE(msg.find("gold_answer"), std::string::npos) << msg;
  }
  write_file(p, "{not json\n");
  EXPECT_THROW(load_dataset(p), DataError);
  EXPECT_THROW(load_dataset(scratch("missing") / "none.jsonl"), DataError);
}

TEST(Jsonl, FixedVocabularyIsKept) {
  fs::path p = scratch("fixed") / "d.jsonl";
  write_file(p, R"({"id":"a","question":["zebra"],"gold_answer":["y"]})"
                "\n");
  Vocabulary v;
  v.add("cat");
  Dataset ds = load_dataset(p, DatasetFormat::jsonl, v);
  EXPECT_FALSE(ds.vocab.find("zebra"));
  EXPECT_EQ(ds.vocab.index("zebra"), Vocabulary::kUnk);
}

TEST(Csv, TablesResolvedFromDirectory) {
  fs::path dir = scratch("csv");
  write_file(dir / "tables" / "medal.csv", "nation,gold\nnorway,9\ncanada,11\n");
  write_file(dir / "data.csv",
             "id,question,table,gold_answer,gold_program,pos,subject\n"
             "q1,which nation had most gold,medal.csv,\"[\"\"canada\"\"]\","
             "\"[[\"\"reset\"\",0],[\"\"reset\"\",0],[\"\"max\"\",1],[\"\"print\"\",0]]\","
             "WDT NN VBD JJS NN,1 2\n");
  Dataset ds = load_dataset(dir / "data.csv", DatasetFormat::csv, std::nullopt, dir / "tables");
  ASSERT_EQ(ds.instances.size(), 1u);
  const Instance& in = ds.instances[0];
  EXPECT_EQ(in.question.size(), 5u);
  EXPECT_EQ(in.subject, (Span{1, 2}));
  EXPECT_TRUE(answers_match(execute(*in.gold_program, *in.table, in.question), in.gold_answer));
  write_file(dir / "bad.csv", "id,question,gold_answer\nq1,x,\n");
  try {
    load_dataset(dir / "bad.csv", DatasetFormat::csv);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
}

TEST(Reports, SaveCreatesDirectories) {
  fs::path p = scratch("reports") / "a" / "b" / "r.jsonl";
  auto m = fixtures::color_classifier();
  std::vector<AttributionReport> rs;
  for (const auto& in : fixtures::color_dataset()) rs.push_back(integrated_gradients(m, in, IGConfig{8}));
  save_report(rs, p, report_to_json);
  auto back = load_jsonl(p);
  ASSERT_EQ(back.size(), rs.size());
  for (std::size_t i = 0; i < rs.size(); ++i) EXPECT_EQ(report_from_json(back[i]), rs[i]);
}

TEST(Reports, ConcurrentSavesToDistinctFilesAreComplete) {
  fs::path dir = scratch("concurrent");
  auto m = fixtures::color_classifier();
  std::vector<AttributionReport> rs;
  for (const auto& in : fixtures::color_dataset()) rs.push_back(integrated_gradients(m, in, IGConfig{8}));
  std::vector<std::thread> workers;
  for (int i = 0; i < 4; ++i)
    workers.emplace_back([&, i] { save_report(rs, dir / ("w" + std::to_string(i)) / "r.jsonl", report_to_json); });
  for (auto& w : workers) w.join();
  for (int i = 0; i < 4; ++i) EXPECT_EQ(load_jsonl(dir / ("w" + std::to_string(i)) / "r.jsonl").size(), rs.size());
}

TEST(Resources, WordListsLoad) {
  EXPECT_EQ(default_stopwords().size(), 56u);
  EXPECT_EQ(default_order_words().size(), 8u);
  EXPECT_EQ(default_attack_phrases().front(), "in not a lot of words");
  fs::path p = scratch("words") / "w.txt";
  write_file(p, "# comment\nalpha\n\n beta \n");
  EXPECT_EQ(load_word_list(p), (std::vector<std::string>{"alpha", "beta"}));
}
