#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "error.hpp"
#include "res.hpp"

using namespace siem;
using namespace siem::res;

namespace {

Alarm alarm(int i) {
  return {"alarm-" + std::to_string(i), "brute_force", 1704067209000 + i, {"auth-" + std::to_string(i)},
          "repeated login failures", 7};
}

const ThresholdKeyMaterial& keys43() {
  static const auto k = dealer_keygen({4, 3}, 256, 42);
  return k;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::io_error;
}

std::filesystem::path temp_file(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("siem_test_" + name);
  std::filesystem::remove(p);
  return p;
}

}  // namespace

TEST_CASE("sha256 known answer") {
  CHECK(to_hex(sha256("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(to_hex(sha256("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("dealer parameters") {
  CHECK(kind_of([] { validate(ThresholdParams{3, 4}); }) == ErrorKind::invalid_params);
  CHECK(kind_of([] { validate(ThresholdParams{3, 0}); }) == ErrorKind::invalid_params);
  CHECK(kind_of([] { dealer_keygen({3, 2}, 64, 1); }) == ErrorKind::invalid_params);
  const auto& k = keys43();
  CHECK(k.shares.size() == 4);
  CHECK(k.pub.vks.size() == 4);
  CHECK(k.pub.delta == 24);
  CHECK(k.pub.e == 65537);
  CHECK(mpz_sizeinbase(k.pub.modulus.get_mpz_t(), 2) == 256);
  CHECK(k.pub.key_id.size() == 16);
  // Same seed, same keys.
  CHECK(dealer_keygen({4, 3}, 256, 42).pub.modulus == k.pub.modulus);
  CHECK(dealer_keygen({4, 3}, 256, 43).pub.modulus != k.pub.modulus);
}

TEST_CASE("shares verify, combine, and every k-subset gives the same signature") {
  const auto& k = keys43();
  auto a = alarm(1);
  std::vector<SignatureShare> shares;
  for (const auto& s : k.shares) {
    shares.push_back(node_sign(s, k.pub, a));
    CHECK(verify_share(k.pub, shares.back(), a));
  }
  auto sig = combine({shares[0], shares[1], shares[2]}, a, k.pub);
  CHECK(verify_complete(k.pub, sig, a));
  CHECK(combine({shares[3], shares[1], shares[0]}, a, k.pub) == sig);
  CHECK(combine({shares[1], shares[2], shares[3]}, a, k.pub) == sig);
  CHECK_FALSE(verify_complete(k.pub, sig, alarm(2)));
  CHECK_FALSE(verify_share(k.pub, shares[0], alarm(2)));
  // Duplicate node ids do not count twice.
  CHECK(kind_of([&] { combine({shares[0], shares[0], shares[1]}, a, k.pub); }) ==
        ErrorKind::insufficient_shares);
  CHECK(kind_of([&] { combine({shares[0], shares[1]}, a, k.pub); }) == ErrorKind::insufficient_shares);
}

TEST_CASE("a corrupted share fails its proof and breaks combination") {
  const auto& k = keys43();
  auto a = alarm(3);
  auto bad = corrupt(node_sign(k.shares[1], k.pub, a), 5);
  CHECK_FALSE(verify_share(k.pub, bad, a));
  auto s1 = node_sign(k.shares[0], k.pub, a);
  auto s3 = node_sign(k.shares[2], k.pub, a);
  CHECK(kind_of([&] { combine({s1, bad, s3}, a, k.pub); }) == ErrorKind::combine_failure);
}

TEST_CASE("material from another key generation is refused") {
  auto other = dealer_keygen({4, 3}, 256, 7);
  auto a = alarm(4);
  auto foreign = node_sign(other.shares[0], other.pub, a);
  CHECK(kind_of([&] { verify_share(keys43().pub, foreign, a); }) == ErrorKind::material_mismatch);
}

TEST_CASE("combiner flags exactly the corrupt node") {
  const auto& k = keys43();
  FaultModel f;
  f.nodes[2] = NodeBehavior::corrupt;
  f.seed = 9;
  auto rec = process_alarm(alarm(5), k, f);
  CHECK(rec.corrupted_nodes == std::vector<unsigned>{2});
  CHECK(verify_complete(k.pub, rec.signature, alarm(5)));
}

TEST_CASE("combiner with dropped and delayed nodes") {
  const auto& k = keys43();
  FaultModel f;
  f.nodes[1] = NodeBehavior::delay;
  f.nodes[3] = NodeBehavior::drop;
  auto rec = process_alarm(alarm(6), k, f);
  CHECK(rec.corrupted_nodes.empty());
  CHECK(verify_complete(k.pub, rec.signature, alarm(6)));
  f.nodes[2] = NodeBehavior::drop;
  CHECK(kind_of([&] { process_alarm(alarm(6), k, f); }) == ErrorKind::quorum_unreachable);
}

TEST_CASE("concurrent submission") {
  const auto& k = keys43();
  auto a = alarm(7);
  Combiner c(k.pub, a);
  std::vector<SignatureShare> shares;
  for (const auto& s : k.shares) shares.push_back(node_sign(s, k.pub, a));
  shares[0] = corrupt(shares[0], 1);
  std::vector<std::thread> ts;
  for (const auto& s : shares) ts.emplace_back([&c, s] { c.submit(s); });
  for (auto& t : ts) t.join();
  REQUIRE(c.done());
  auto rec = c.finish();
  CHECK(verify_complete(k.pub, rec.signature, a));
  CHECK(c.corrupted() == std::vector<unsigned>{1});
}

TEST_CASE("store appends, audits clean, and detects tampering") {
  const auto& k = keys43();
  auto path = temp_file("store.res");
  {
    RecordStore st(path);
    for (int i = 0; i < 3; ++i) CHECK(st.append(process_alarm(alarm(i), k, {})).seq == std::uint64_t(i + 1));
  }
  {
    RecordStore reopened(path);
    CHECK(reopened.next_seq() == 4);
  }
  auto rep = audit(path, k.pub);
  CHECK(rep.records == 3);
  CHECK(rep.ok());
  CHECK(read_records(path).size() == 3);

  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto bytes = ss.str();
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    auto t = bytes;
    t[i] = static_cast<char>(t[i] ^ 0x01);
    if (audit_bytes(t, k.pub).ok()) FAIL("undetected flip at byte " << i);
  }
  CHECK_FALSE(audit_bytes(bytes.substr(0, bytes.size() - 1), k.pub).ok());
  auto json = audit_to_json(rep);
  CHECK(json["ok"] == true);
}

TEST_CASE("public material round trip") {
  const auto& k = keys43();
  auto back = public_from_json(nlohmann::json::parse(public_to_json(k.pub).dump()));
  CHECK(back.modulus == k.pub.modulus);
  CHECK(back.vks == k.pub.vks);
  CHECK(back.key_id == k.pub.key_id);
  CHECK(back.delta == k.pub.delta);
}
