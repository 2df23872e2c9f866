#include <doctest.h>

#include <cmath>

#include "tracelm/encode.hpp"

using namespace tracelm;
using encode::NumericEncoder;
using encode::Vocabulary;

namespace {

trace::Request make_request(const std::vector<std::string>& names) {
  trace::Request r;
  std::int64_t ts = 0;
  for (const auto& name : names) {
    trace::SyscallEvent e;
    e.name = name;
    e.ts_ns = ts;
    e.ret = 0;
    e.procname = "srv";
    e.tid = 7;
    e.pid = 7;
    e.entry = true;
    r.events.push_back(std::move(e));
    ts += 100;
  }
  trace::compute_deltas(r);
  return r;
}

}  // namespace

TEST_SUITE("encode") {

TEST_CASE("build_vocab keeps frequent tokens and routes the rest to UNK") {
  std::vector<trace::Request> corpus;
  std::vector<std::string> names;
  for (int i = 0; i < 5; ++i) names.push_back("read");
  for (int i = 0; i < 3; ++i) names.push_back("write");
  names.push_back("rare");
  corpus.push_back(make_request(names));

  const Vocabulary v = encode::build_vocab(corpus, 2);
  CHECK(v.name.lookup("read") == 2);   // most frequent first
  CHECK(v.name.lookup("write") == 3);
  CHECK(v.name.lookup("rare") == encode::kUnkIndex);
  CHECK(v.name.size() == 4);  // UNK, SOS, read, write
}

TEST_CASE("min_count 1 keeps every distinct token") {
  std::vector<trace::Request> corpus = {make_request({"a", "b", "c"})};
  const Vocabulary v = encode::build_vocab(corpus, 1);
  CHECK(v.name.size() == 5);
  CHECK(v.name.lookup("a") >= 2);
  CHECK(v.name.lookup("b") >= 2);
  CHECK(v.name.lookup("c") >= 2);
}

TEST_CASE("vocab building is deterministic, ties broken lexicographically") {
  std::vector<trace::Request> corpus = {make_request({"zz", "aa", "zz", "aa", "mm"})};
  const Vocabulary v1 = encode::build_vocab(corpus, 1);
  const Vocabulary v2 = encode::build_vocab(corpus, 1);
  CHECK(v1.to_json() == v2.to_json());
  CHECK(v1.name.lookup("aa") == 2);  // same count as zz, "aa" < "zz"
  CHECK(v1.name.lookup("zz") == 3);
  CHECK(v1.name.lookup("mm") == 4);
}

TEST_CASE("vocab JSON round-trip") {
  std::vector<trace::Request> corpus = {make_request({"read", "write", "poll"})};
  const Vocabulary v = encode::build_vocab(corpus, 1);
  const Vocabulary back = Vocabulary::from_json(v.to_json());
  CHECK(back.to_json() == v.to_json());
  CHECK(back.name.lookup("poll") == v.name.lookup("poll"));
}

TEST_CASE("empty dataset is rejected") {
  CHECK_THROWS_AS(encode::build_vocab({}, 1), std::invalid_argument);
}

TEST_CASE("numeric encoding matches the stated formula") {
  SUBCASE("x = 0 gives alternating 0,1") {
    const NumericEncoder enc(4);
    const Eigen::RowVectorXd out = enc.encode(0.0);
    CHECK(out[0] == doctest::Approx(0.0));
    CHECK(out[1] == doctest::Approx(1.0));
    CHECK(out[2] == doctest::Approx(0.0));
    CHECK(out[3] == doctest::Approx(1.0));
  }
  SUBCASE("x = 1, d = 2 gives sin(1), cos(1)") {
    const NumericEncoder enc(2);
    const Eigen::RowVectorXd out = enc.encode(1.0);
    CHECK(out[0] == doctest::Approx(0.8414709848078965).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(0.5403023058681398).epsilon(1e-12));
  }
  SUBCASE("x = 1e6 is finite, bounded, and matches argument-reduced values") {
    const NumericEncoder enc(2);
    const Eigen::RowVectorXd out = enc.encode(1e6);
    CHECK(std::isfinite(out[0]));
    CHECK(std::isfinite(out[1]));
    CHECK(out[0] == doctest::Approx(-0.34999350217129294).epsilon(1e-9));
    CHECK(out[1] == doctest::Approx(0.9367521275331447).epsilon(1e-9));
  }
  SUBCASE("pairs share the exponent: even i sin, odd i cos") {
    const NumericEncoder enc(8);
    const double x = 1234.5;
    const Eigen::RowVectorXd out = enc.encode(x);
    for (int pair = 0; pair < 4; ++pair) {
      const double scale = std::pow(10.0, -6.0 * (2.0 * pair) / 8.0);
      CHECK(out[2 * pair] == doctest::Approx(std::sin(x * scale)).epsilon(1e-12));
      CHECK(out[2 * pair + 1] == doctest::Approx(std::cos(x * scale)).epsilon(1e-12));
    }
  }
}

TEST_CASE("numeric encoding stays in [-1,1] up to 1e12") {
  const NumericEncoder enc(32);
  for (double x : {0.0, 1.0, 3.5, 1e3, 1e6, 1e9, 5e11, 1e12}) {
    const Eigen::RowVectorXd out = enc.encode(x);
    for (int i = 0; i < out.size(); ++i) {
      CHECK(out[i] >= -1.0);
      CHECK(out[i] <= 1.0);
    }
  }
}

TEST_CASE("non-finite input is rejected, odd dims are rejected") {
  CHECK_THROWS_AS(NumericEncoder(3), std::invalid_argument);
  const NumericEncoder enc(4);
  CHECK_THROWS_AS(enc.encode(std::nan("")), std::invalid_argument);
  CHECK_THROWS_AS(enc.encode(std::numeric_limits<double>::infinity()), std::invalid_argument);
}

TEST_CASE("joint representation shape and purity") {
  std::vector<trace::Request> corpus = {make_request({"read", "write", "read", "poll"})};
  const Vocabulary vocab = encode::build_vocab(corpus, 1);
  const NumericEncoder enc(8);
  const encode::EmbeddingSet tables = encode::init_embeddings(vocab, 4, 42);

  const Eigen::MatrixXd rep = encode::joint_representation(corpus[0], vocab, tables, enc);
  CHECK(rep.rows() == 5);            // N + 1 with the SOS row
  CHECK(rep.cols() == 4 * 4 + 3 * 8);  // 4 d_e + 3 d

  const Eigen::MatrixXd again = encode::joint_representation(corpus[0], vocab, tables, enc);
  CHECK(rep == again);  // bit-identical
}

TEST_CASE("identical events produce identical rows") {
  std::vector<trace::Request> corpus = {make_request({"read", "read", "read"})};
  // equal gaps make rows 2 and 3 identical (same name, gap, tid, pid)
  const Vocabulary vocab = encode::build_vocab(corpus, 1);
  const NumericEncoder enc(4);
  const encode::EmbeddingSet tables = encode::init_embeddings(vocab, 4, 1);
  const Eigen::MatrixXd rep = encode::joint_representation(corpus[0], vocab, tables, enc);
  CHECK(rep.row(2) == rep.row(3));
}

TEST_CASE("OOV procname uses the UNK embedding and only that slice changes") {
  std::vector<trace::Request> corpus = {make_request({"read", "write"})};
  const Vocabulary vocab = encode::build_vocab(corpus, 1);
  const NumericEncoder enc(4);
  const encode::EmbeddingSet tables = encode::init_embeddings(vocab, 4, 7);

  trace::Request oov = corpus[0];
  oov.events[1].procname = "never_seen";
  const Eigen::MatrixXd base = encode::joint_representation(corpus[0], vocab, tables, enc);
  const Eigen::MatrixXd alt = encode::joint_representation(oov, vocab, tables, enc);
  // procname slice is columns [3 de, 4 de)
  CHECK(alt.block(2, 12, 1, 4) ==
        tables.procname.weights.row(encode::kUnkIndex).cast<double>());
  // all other columns untouched
  CHECK(alt.block(2, 0, 1, 12) == base.block(2, 0, 1, 12));
  CHECK(alt.block(2, 16, 1, alt.cols() - 16) == base.block(2, 16, 1, base.cols() - 16));
}

TEST_CASE("changing tid changes only the tid-encoding slice") {
  std::vector<trace::Request> corpus = {make_request({"read", "write", "poll"})};
  const Vocabulary vocab = encode::build_vocab(corpus, 1);
  const NumericEncoder enc(6);
  const encode::EmbeddingSet tables = encode::init_embeddings(vocab, 4, 3);

  trace::Request changed = corpus[0];
  changed.events[1].tid = 12345;
  const Eigen::MatrixXd base = encode::joint_representation(corpus[0], vocab, tables, enc);
  const Eigen::MatrixXd alt = encode::joint_representation(changed, vocab, tables, enc);

  const int de = 4, d = 6;
  const int tid_off = 4 * de;
  for (Eigen::Index r = 0; r < base.rows(); ++r) {
    for (Eigen::Index c = 0; c < base.cols(); ++c) {
      const bool tid_slice_of_changed_row = r == 2 && c >= tid_off && c < tid_off + d;
      if (tid_slice_of_changed_row)
        continue;  // allowed to differ
      CHECK(base(r, c) == alt(r, c));
    }
  }
  CHECK(base.block(2, tid_off, 1, d) != alt.block(2, tid_off, 1, d));
}

TEST_CASE("embedding lookup returns exactly the table row") {
  std::vector<trace::Request> corpus = {make_request({"read"})};
  const Vocabulary vocab = encode::build_vocab(corpus, 1);
  const NumericEncoder enc(4);
  const encode::EmbeddingSet tables = encode::init_embeddings(vocab, 4, 11);
  const Eigen::MatrixXd rep = encode::joint_representation(corpus[0], vocab, tables, enc);
  const int idx = vocab.name.lookup("read");
  CHECK(rep.block(1, 0, 1, 4) == tables.name.weights.row(idx).cast<double>());
  CHECK(rep.block(0, 0, 1, 4) == tables.name.weights.row(encode::kSosIndex).cast<double>());
}

TEST_CASE("encode_request requires computed deltas") {
  trace::Request r = make_request({"read", "write"});
  r.deltas_ns.clear();
  std::vector<trace::Request> corpus = {make_request({"read", "write"})};
  const Vocabulary vocab = encode::build_vocab(corpus, 1);
  const NumericEncoder enc(4);
  CHECK_THROWS_AS(encode::encode_request(r, vocab, enc), std::invalid_argument);
}

}  // TEST_SUITE
