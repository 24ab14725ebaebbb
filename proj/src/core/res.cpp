#include "res.hpp"

#include <openssl/evp.h>
#include <openssl/rand.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "error.hpp"

namespace siem::res {

namespace {

constexpr unsigned kHashBits = 256;
constexpr unsigned kSmallPrimes[] = {
    3,   5,   7,   11,  13,  17,  19,  23,  29,  31,  37,  41,  43,  47,  53,  59,  61,  67,
    71,  73,  79,  83,  89,  97,  101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157,
    163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251, 257,
    263, 269, 271, 277, 281, 283, 293, 307, 311, 313, 317, 331, 337, 347, 349, 353, 359, 367,
    373, 379, 383, 389, 397, 401, 409, 419, 421, 431, 433, 439, 443, 449, 457, 461, 463, 467,
    479, 487, 491, 499, 503, 509, 521, 523, 541, 547, 557, 563, 569, 571, 577, 587, 593, 599};

mpz_class safe_prime(gmp_randclass& rng, unsigned bits) {
  // p = 2q + 1 with q of bits-1 bits and its two top bits set.
  while (true) {
    mpz_class q = rng.get_z_bits(bits - 1);
    mpz_setbit(q.get_mpz_t(), bits - 2);
    mpz_setbit(q.get_mpz_t(), bits - 3);
    mpz_setbit(q.get_mpz_t(), 0);
    bool sieved = true;
    for (unsigned r : kSmallPrimes) {
      auto m = mpz_fdiv_ui(q.get_mpz_t(), r);
      if ((m == 0 && q != r) || m == (r - 1) / 2) {
        sieved = false;
        break;
      }
    }
    if (!sieved) continue;
    if (!mpz_probab_prime_p(q.get_mpz_t(), 2)) continue;
    mpz_class p = 2 * q + 1;
    if (!mpz_probab_prime_p(p.get_mpz_t(), 2)) continue;
    if (mpz_probab_prime_p(q.get_mpz_t(), 25) && mpz_probab_prime_p(p.get_mpz_t(), 25)) return p;
  }
}

mpz_class from_bytes(const std::uint8_t* data, std::size_t len) {
  mpz_class z;
  mpz_import(z.get_mpz_t(), len, 1, 1, 1, 0, data);
  return z;
}

std::string hex(const mpz_class& z) { return z.get_str(16); }

mpz_class from_hex(const std::string& s, const char* what) {
  mpz_class z;
  if (s.empty() || z.set_str(s, 16) != 0)
    throw Error(ErrorKind::invalid_config, std::string("bad hex value for ") + what);
  return z;
}

// Bytes of SHA-256(seed || counter) blocks until `bits` are covered.
mpz_class expand_hash(std::string_view seed, unsigned bits) {
  std::string buf;
  const std::size_t need = (bits + 7) / 8;
  for (std::uint32_t ctr = 0; buf.size() < need; ++ctr) {
    std::string in(seed);
    for (int s = 24; s >= 0; s -= 8) in.push_back(static_cast<char>((ctr >> s) & 0xff));
    auto d = sha256(in);
    buf.append(reinterpret_cast<const char*>(d.data()), d.size());
  }
  buf.resize(need);
  mpz_class z = from_bytes(reinterpret_cast<const std::uint8_t*>(buf.data()), buf.size());
  mpz_fdiv_r_2exp(z.get_mpz_t(), z.get_mpz_t(), bits);
  return z;
}

mpz_class powm(const mpz_class& base, const mpz_class& exp, const mpz_class& mod) {
  mpz_class out;
  mpz_powm(out.get_mpz_t(), base.get_mpz_t(), exp.get_mpz_t(), mod.get_mpz_t());
  return out;
}

bool invertible(const mpz_class& x, const mpz_class& mod) {
  if (x <= 0 || x >= mod) return false;
  mpz_class g;
  mpz_gcd(g.get_mpz_t(), x.get_mpz_t(), mod.get_mpz_t());
  return g == 1;
}

std::string fingerprint(const mpz_class& modulus) { return to_hex(sha256(hex(modulus))).substr(0, 16); }

mpz_class factorial(unsigned n) {
  mpz_class f;
  mpz_fac_ui(f.get_mpz_t(), n);
  return f;
}

mpz_class proof_challenge(const PublicMaterial& pub, const mpz_class& x_tilde, const mpz_class& vi,
                          const mpz_class& xi2, const mpz_class& v_r, const mpz_class& x_r) {
  std::string in;
  for (const auto* z : {&pub.v, &x_tilde, &vi, &xi2, &v_r, &x_r}) in += hex(*z) + "|";
  auto d = sha256(in);
  return from_bytes(d.data(), d.size());
}

void check_material(const PublicMaterial& pub, const SignatureShare& share) {
  if (share.key_id != pub.key_id)
    throw Error(ErrorKind::material_mismatch, "share from node " + std::to_string(share.node_id) +
                                                  " belongs to key " + share.key_id +
                                                  ", expected " + pub.key_id);
  if (share.node_id < 1 || share.node_id > pub.vks.size())
    throw Error(ErrorKind::material_mismatch,
                "no verification key share for node " + std::to_string(share.node_id));
}

}  // namespace

void validate(const ThresholdParams& p) {
  if (p.n < 1 || p.k < 1 || p.k > p.n)
    throw Error(ErrorKind::invalid_params, "need 1 <= k <= n, got n=" + std::to_string(p.n) +
                                               " k=" + std::to_string(p.k));
  if (p.n >= 65537) throw Error(ErrorKind::invalid_params, "n must stay below the public exponent");
}

Digest sha256(std::string_view bytes) {
  Digest d{};
  unsigned len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), d.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != d.size())
    throw Error(ErrorKind::io_error, "SHA-256 failed");
  return d;
}

std::string to_hex(const Digest& d) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (auto b : d) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 15]);
  }
  return s;
}

Digest alarm_digest(const Alarm& alarm) { return sha256(serialize_alarm(alarm)); }

mpz_class hash_to_modulus(const Digest& digest, const mpz_class& modulus) {
  std::string seed = "fdh|" + to_hex(digest);
  mpz_class x = expand_hash(seed, static_cast<unsigned>(mpz_sizeinbase(modulus.get_mpz_t(), 2)) + 64);
  return x % modulus;
}

void validate_modulus_bits(unsigned bits) {
  if (bits < 128 || bits % 2) throw Error(ErrorKind::invalid_params, "modulus size must be even and at least 128 bits");
}

ThresholdKeyMaterial dealer_keygen(const ThresholdParams& params, unsigned modulus_bits,
                                   std::uint64_t seed, bool os_entropy) {
  validate(params);
  validate_modulus_bits(modulus_bits);

  gmp_randclass rng(gmp_randinit_mt);
  if (os_entropy) {
    unsigned char buf[32];
    if (RAND_bytes(buf, sizeof buf) != 1) throw Error(ErrorKind::io_error, "system entropy unavailable");
    mpz_class s;
    mpz_import(s.get_mpz_t(), sizeof buf, 1, 1, 0, 0, buf);
    rng.seed(s);
  } else {
    rng.seed(mpz_class(std::to_string(seed)));
  }

  mpz_class p = safe_prime(rng, modulus_bits / 2);
  mpz_class q;
  do q = safe_prime(rng, modulus_bits / 2);
  while (q == p);

  ThresholdKeyMaterial km;
  auto& pub = km.pub;
  pub.params = params;
  pub.modulus = p * q;
  pub.e = 65537;
  pub.delta = factorial(params.n);
  pub.key_id = fingerprint(pub.modulus);

  mpz_class m = ((p - 1) / 2) * ((q - 1) / 2);
  mpz_class d;
  if (!mpz_invert(d.get_mpz_t(), pub.e.get_mpz_t(), m.get_mpz_t()))
    throw Error(ErrorKind::invalid_params, "public exponent not invertible");

  std::vector<mpz_class> coeffs{d};
  for (unsigned i = 1; i < params.k; ++i) coeffs.push_back(rng.get_z_range(m));

  mpz_class r;
  do r = rng.get_z_range(pub.modulus);
  while (!invertible(r, pub.modulus));
  pub.v = r * r % pub.modulus;

  for (unsigned i = 1; i <= params.n; ++i) {
    mpz_class s = 0;
    for (auto c = coeffs.rbegin(); c != coeffs.rend(); ++c) s = (s * i + *c) % m;
    pub.vks.push_back(powm(pub.v, s, pub.modulus));
    km.shares.push_back({i, s, pub.key_id});
  }

  // Dealer secrets go out of scope here; scrub what we can.
  p = q = m = d = 0;
  for (auto& c : coeffs) c = 0;
  return km;
}

SignatureShare node_sign(const KeyShare& share, const PublicMaterial& pub, const Alarm& alarm) {
  if (share.key_id != pub.key_id)
    throw Error(ErrorKind::material_mismatch, "key share does not belong to " + pub.key_id);
  SignatureShare out;
  out.node_id = share.node_id;
  out.key_id = share.key_id;
  out.digest = alarm_digest(alarm);
  const auto& N = pub.modulus;
  mpz_class x = hash_to_modulus(out.digest, N);
  out.value = powm(x, 2 * pub.delta * share.secret, N);

  // Equality of discrete logs: log_v(v_i) = log_{x~}(x_i^2), x~ = x^{4 delta}.
  mpz_class x_tilde = powm(x, 4 * pub.delta, N);
  const auto bits = static_cast<unsigned>(mpz_sizeinbase(N.get_mpz_t(), 2)) + 2 * kHashBits;
  mpz_class r = expand_hash("proof|" + hex(share.secret) + "|" + to_hex(out.digest), bits);
  mpz_class vi = pub.vks.at(share.node_id - 1);
  mpz_class xi2 = out.value * out.value % N;
  out.proof.c = proof_challenge(pub, x_tilde, vi, xi2, powm(pub.v, r, N), powm(x_tilde, r, N));
  out.proof.z = share.secret * out.proof.c + r;
  return out;
}

bool verify_share(const PublicMaterial& pub, const SignatureShare& share, const Alarm& alarm) {
  check_material(pub, share);
  if (share.digest != alarm_digest(alarm)) return false;
  const auto& N = pub.modulus;
  if (!invertible(share.value, N) || share.proof.z < 0 || share.proof.c < 0) return false;
  mpz_class x = hash_to_modulus(share.digest, N);
  mpz_class x_tilde = powm(x, 4 * pub.delta, N);
  const auto& vi = pub.vks[share.node_id - 1];
  mpz_class xi2 = share.value * share.value % N;
  mpz_class neg_c = -share.proof.c;
  mpz_class v_r = powm(pub.v, share.proof.z, N) * powm(vi, neg_c, N) % N;
  mpz_class x_r = powm(x_tilde, share.proof.z, N) * powm(xi2, neg_c, N) % N;
  return proof_challenge(pub, x_tilde, vi, xi2, v_r, x_r) == share.proof.c;
}

bool verify_complete(const PublicMaterial& pub, const mpz_class& signature, const Alarm& alarm) {
  if (signature <= 0 || signature >= pub.modulus) return false;
  return powm(signature, pub.e, pub.modulus) == hash_to_modulus(alarm_digest(alarm), pub.modulus);
}

mpz_class combine(const std::vector<SignatureShare>& shares, const Alarm& alarm,
                  const PublicMaterial& pub) {
  std::vector<const SignatureShare*> set;
  for (const auto& s : shares) {
    check_material(pub, s);
    if (std::none_of(set.begin(), set.end(), [&](auto* o) { return o->node_id == s.node_id; }))
      set.push_back(&s);
    if (set.size() == pub.params.k) break;
  }
  if (set.size() < pub.params.k)
    throw Error(ErrorKind::insufficient_shares, "have " + std::to_string(set.size()) +
                                                    " distinct shares, need " +
                                                    std::to_string(pub.params.k));
  const auto& N = pub.modulus;
  const auto digest = alarm_digest(alarm);
  for (auto* s : set)
    if (s->digest != digest || !invertible(s->value, N))
      throw Error(ErrorKind::combine_failure,
                  "share from node " + std::to_string(s->node_id) + " is unusable");

  mpz_class w = 1;
  for (auto* sj : set) {
    mpz_class num = pub.delta;
    mpz_class den = 1;
    for (auto* so : set) {
      if (so == sj) continue;
      num *= -static_cast<long>(so->node_id);
      den *= static_cast<long>(sj->node_id) - static_cast<long>(so->node_id);
    }
    mpz_class lambda;
    mpz_divexact(lambda.get_mpz_t(), num.get_mpz_t(), den.get_mpz_t());
    w = w * powm(sj->value, 2 * lambda, N) % N;
  }

  mpz_class e_prime = 4 * pub.delta * pub.delta;
  mpz_class g, a, b;
  mpz_gcdext(g.get_mpz_t(), a.get_mpz_t(), b.get_mpz_t(), e_prime.get_mpz_t(), pub.e.get_mpz_t());
  if (g != 1) throw Error(ErrorKind::combine_failure, "gcd(4 delta^2, e) != 1");
  mpz_class x = hash_to_modulus(digest, N);
  if (!invertible(x, N)) throw Error(ErrorKind::combine_failure, "message hash not invertible");
  mpz_class y = powm(w, a, N) * powm(x, b, N) % N;
  if (!verify_complete(pub, y, alarm))
    throw Error(ErrorKind::combine_failure, "combined signature does not verify");
  return y;
}

SignatureShare corrupt(SignatureShare share, unsigned bit) {
  mpz_combit(share.value.get_mpz_t(), bit);
  return share;
}

// ---------------------------------------------------------------------------

Combiner::Combiner(const PublicMaterial& pub, Alarm alarm) : pub_(pub), alarm_(std::move(alarm)) {}

bool Combiner::submit(const SignatureShare& share) {
  check_material(pub_, share);
  std::lock_guard lock(mu_);
  if (signature_) return true;
  if (!seen_.insert(share.node_id).second) return false;
  unverified_.push_back(share);
  try_combine();
  return signature_.has_value();
}

void Combiner::try_combine() {
  const auto k = pub_.params.k;
  while (!signature_ && validated_.size() + unverified_.size() >= k) {
    std::vector<SignatureShare> candidate(validated_.begin(),
                                          validated_.begin() + std::min<std::size_t>(k, validated_.size()));
    std::size_t from_unverified = k - candidate.size();
    candidate.insert(candidate.end(), unverified_.begin(),
                     unverified_.begin() + static_cast<std::ptrdiff_t>(from_unverified));
    ++attempts_;
    try {
      signature_ = combine(candidate, alarm_, pub_);
      return;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::combine_failure) throw;
    }
    // Check each untested share of the attempt, keep the good, flag the bad.
    bool flagged = false;
    std::vector<SignatureShare> rest(unverified_.begin() + static_cast<std::ptrdiff_t>(from_unverified),
                                     unverified_.end());
    for (std::size_t i = 0; i < from_unverified; ++i) {
      const auto& s = unverified_[i];
      if (verify_share(pub_, s, alarm_)) {
        validated_.push_back(s);
      } else {
        corrupted_.insert(s.node_id);
        flagged = true;
      }
    }
    unverified_ = std::move(rest);
    if (!flagged) return;  // verified shares that still fail to combine: give up on this set
  }
}

bool Combiner::done() const {
  std::lock_guard lock(mu_);
  return signature_.has_value();
}

SignedRecord Combiner::finish() const {
  std::lock_guard lock(mu_);
  if (!signature_)
    throw Error(ErrorKind::quorum_unreachable,
                "alarm " + alarm_.alarm_id + ": " + std::to_string(validated_.size() + unverified_.size()) +
                    " usable shares, need " + std::to_string(pub_.params.k));
  SignedRecord r;
  r.alarm = alarm_;
  r.signature = *signature_;
  r.corrupted_nodes.assign(corrupted_.begin(), corrupted_.end());
  return r;
}

std::vector<unsigned> Combiner::corrupted() const {
  std::lock_guard lock(mu_);
  return {corrupted_.begin(), corrupted_.end()};
}

std::size_t Combiner::combine_attempts() const {
  std::lock_guard lock(mu_);
  return attempts_;
}

NodeBehavior behavior_from_string(const std::string& s) {
  if (s == "honest") return NodeBehavior::honest;
  if (s == "corrupt") return NodeBehavior::corrupt;
  if (s == "drop") return NodeBehavior::drop;
  if (s == "delay") return NodeBehavior::delay;
  throw Error(ErrorKind::invalid_config, "unknown node behaviour '" + s + "'");
}

const char* to_string(NodeBehavior b) noexcept {
  switch (b) {
    case NodeBehavior::honest: return "honest";
    case NodeBehavior::corrupt: return "corrupt";
    case NodeBehavior::drop: return "drop";
    case NodeBehavior::delay: return "delay";
  }
  return "?";
}

NodeBehavior FaultModel::of(unsigned node) const {
  auto it = nodes.find(node);
  return it == nodes.end() ? NodeBehavior::honest : it->second;
}

SignedRecord process_alarm(const Alarm& alarm, const ThresholdKeyMaterial& keys,
                           const FaultModel& faults) {
  Combiner combiner(keys.pub, alarm);
  std::vector<const KeyShare*> order;
  for (const auto& s : keys.shares)
    if (faults.of(s.node_id) == NodeBehavior::honest || faults.of(s.node_id) == NodeBehavior::corrupt)
      order.push_back(&s);
  for (const auto& s : keys.shares)
    if (faults.of(s.node_id) == NodeBehavior::delay) order.push_back(&s);

  const auto bits = static_cast<unsigned>(mpz_sizeinbase(keys.pub.modulus.get_mpz_t(), 2));
  for (const auto* ks : order) {
    auto share = node_sign(*ks, keys.pub, alarm);
    if (faults.of(ks->node_id) == NodeBehavior::corrupt) {
      std::mt19937_64 rng(faults.seed ^ (0x9e3779b97f4a7c15ULL * ks->node_id));
      share = corrupt(std::move(share), static_cast<unsigned>(rng() % (bits - 1)));
    }
    if (combiner.submit(share)) break;
  }
  return combiner.finish();
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::ordered_json record_body(const SignedRecord& r) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["seq"] = r.seq;
  j["alarm"] = nlohmann::ordered_json::parse(serialize_alarm(r.alarm));
  j["signature"] = hex(r.signature);
  j["corrupted_nodes"] = r.corrupted_nodes;
  return j;
}

std::string frame(const std::string& body) {
  std::string out;
  const auto len = static_cast<std::uint32_t>(body.size());
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((len >> s) & 0xff));
  return out + body;
}

struct Frame {
  std::string_view body;
  std::string error;
};

// Splits into frames; a framing error is reported as the last element.
std::vector<Frame> split_frames(std::string_view bytes) {
  std::vector<Frame> out;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < 4) {
      out.push_back({{}, "truncated length prefix"});
      break;
    }
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len = (len << 8) | static_cast<std::uint8_t>(bytes[pos + i]);
    pos += 4;
    if (bytes.size() - pos < len) {
      out.push_back({{}, "truncated record"});
      break;
    }
    out.push_back({bytes.substr(pos, len), {}});
    pos += len;
  }
  return out;
}

// Decodes a frame body, throwing std::runtime_error with the reason.
SignedRecord decode(std::string_view body, std::optional<std::uint64_t>& seq_out) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(body);
  } catch (const nlohmann::json::exception&) {
    throw std::runtime_error("unparseable record");
  }
  if (!j.is_object() || !j.contains("seq") || !j["seq"].is_number_unsigned())
    throw std::runtime_error("record without a sequence number");
  seq_out = j["seq"].get<std::uint64_t>();
  if (j.dump() != body) throw std::runtime_error("non-canonical record bytes");
  if (!j.contains("record_digest") || !j["record_digest"].is_string())
    throw std::runtime_error("missing record digest");
  auto stored = j["record_digest"].get<std::string>();
  j.erase("record_digest");
  if (to_hex(sha256(j.dump())) != stored) throw std::runtime_error("record digest mismatch");
  SignedRecord r;
  r.seq = *seq_out;
  try {
    r.alarm = deserialize_alarm(j.at("alarm").dump());
    r.signature = from_hex(j.at("signature").get<std::string>(), "signature");
    r.corrupted_nodes = j.at("corrupted_nodes").get<std::vector<unsigned>>();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("bad record field: ") + e.what());
  }
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::io_error, "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string encode_record(const SignedRecord& r) {
  auto j = record_body(r);
  j["record_digest"] = to_hex(sha256(j.dump()));
  return frame(j.dump());
}

std::vector<SignedRecord> read_records(const std::filesystem::path& store) {
  std::vector<SignedRecord> out;
  if (!std::filesystem::exists(store)) return out;
  auto bytes = slurp(store);
  for (const auto& f : split_frames(bytes)) {
    if (!f.error.empty()) break;
    std::optional<std::uint64_t> seq;
    try {
      out.push_back(decode(f.body, seq));
    } catch (const std::runtime_error&) {
      break;
    }
  }
  return out;
}

RecordStore::RecordStore(std::filesystem::path path) : path_(std::move(path)) {
  if (std::filesystem::exists(path_)) {
    auto bytes = slurp(path_);
    for (const auto& f : split_frames(bytes)) {
      if (!f.error.empty()) throw Error(ErrorKind::io_error, path_.string() + ": " + f.error);
      std::optional<std::uint64_t> seq;
      try {
        decode(f.body, seq);
      } catch (const std::runtime_error& e) {
        if (!seq) throw Error(ErrorKind::io_error, path_.string() + ": " + e.what());
      }
      if (seq) next_ = std::max(next_, *seq + 1);
    }
  } else {
    std::ofstream(path_, std::ios::binary);
  }
  if (!std::filesystem::exists(path_)) throw Error(ErrorKind::io_error, "cannot create " + path_.string());
}

SignedRecord RecordStore::append(SignedRecord record) {
  std::lock_guard lock(mu_);
  record.seq = next_;
  auto bytes = encode_record(record);
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw Error(ErrorKind::io_error, "append to " + path_.string() + " failed");
  ++next_;
  return record;
}

std::uint64_t RecordStore::next_seq() const {
  std::lock_guard lock(mu_);
  return next_;
}

AuditReport audit_bytes(std::string_view bytes, const PublicMaterial& pub) {
  AuditReport rep;
  std::optional<std::uint64_t> last_seq;
  auto frames = split_frames(bytes);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    ++rep.records;
    if (!frames[i].error.empty()) {
      rep.failures.push_back({i, std::nullopt, frames[i].error});
      break;
    }
    std::optional<std::uint64_t> seq;
    try {
      auto r = decode(frames[i].body, seq);
      if (!verify_complete(pub, r.signature, r.alarm)) throw std::runtime_error("signature does not verify");
      if (last_seq && r.seq <= *last_seq) throw std::runtime_error("sequence number not increasing");
      last_seq = r.seq;
    } catch (const std::runtime_error& e) {
      rep.failures.push_back({i, seq, e.what()});
    }
  }
  return rep;
}

AuditReport audit(const std::filesystem::path& store, const PublicMaterial& pub) {
  if (!std::filesystem::exists(store)) return {};
  return audit_bytes(slurp(store), pub);
}

nlohmann::ordered_json audit_to_json(const AuditReport& r) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["records"] = r.records;
  j["ok"] = r.ok();
  auto f = nlohmann::ordered_json::array();
  for (const auto& x : r.failures) {
    nlohmann::ordered_json o = nlohmann::ordered_json::object();
    o["index"] = x.index;
    o["seq"] = x.seq ? nlohmann::ordered_json(*x.seq) : nlohmann::ordered_json(nullptr);
    o["reason"] = x.reason;
    f.push_back(o);
  }
  j["failures"] = f;
  return j;
}

nlohmann::ordered_json public_to_json(const PublicMaterial& pub) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["key_id"] = pub.key_id;
  j["n"] = pub.params.n;
  j["k"] = pub.params.k;
  j["modulus"] = hex(pub.modulus);
  j["e"] = hex(pub.e);
  j["v"] = hex(pub.v);
  auto vks = nlohmann::ordered_json::array();
  for (const auto& vk : pub.vks) vks.push_back(hex(vk));
  j["vks"] = vks;
  return j;
}

PublicMaterial public_from_json(const nlohmann::json& j) {
  try {
    PublicMaterial pub;
    pub.params = {j.at("n").get<unsigned>(), j.at("k").get<unsigned>()};
    validate(pub.params);
    pub.modulus = from_hex(j.at("modulus").get<std::string>(), "modulus");
    pub.e = from_hex(j.at("e").get<std::string>(), "e");
    pub.v = from_hex(j.at("v").get<std::string>(), "v");
    for (const auto& vk : j.at("vks")) pub.vks.push_back(from_hex(vk.get<std::string>(), "vks"));
    if (pub.vks.size() != pub.params.n)
      throw Error(ErrorKind::material_mismatch, "verification key share count differs from n");
    pub.delta = factorial(pub.params.n);
    pub.key_id = j.at("key_id").get<std::string>();
    if (pub.key_id != fingerprint(pub.modulus))
      throw Error(ErrorKind::material_mismatch, "key id does not match the modulus");
    return pub;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::invalid_config, std::string("public key document: ") + e.what());
  }
}

std::string dead_letter_line(const Alarm& alarm, const std::string& reason) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["alarm"] = nlohmann::ordered_json::parse(serialize_alarm(alarm));
  j["reason"] = reason;
  return j.dump() + "\n";
}

}  // namespace siem::res
