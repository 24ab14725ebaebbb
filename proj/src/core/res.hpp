#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <gmpxx.h>
#include <json.hpp>

#include "event.hpp"

// Resilient event storage: (k, n) threshold RSA signatures over alarms and an
// append-only store of signed records.
namespace siem::res {

struct ThresholdParams {
  unsigned n = 4;
  unsigned k = 3;
};

/// Throws Error(invalid_params) unless 1 <= k <= n.
void validate(const ThresholdParams& p);
void validate_modulus_bits(unsigned bits);

/// Everything a verifier or combiner may know.
struct PublicMaterial {
  ThresholdParams params;
  mpz_class modulus;
  mpz_class e;
  mpz_class v;                 // verification key base
  std::vector<mpz_class> vks;  // vks[i-1] = v^{s_i}
  mpz_class delta;             // n!
  std::string key_id;          // fingerprint of the modulus
};

struct KeyShare {
  unsigned node_id = 0;  // 1-based
  mpz_class secret;
  std::string key_id;
};

struct ThresholdKeyMaterial {
  PublicMaterial pub;
  std::vector<KeyShare> shares;
};

/// Dealer: safe-prime RSA modulus of `modulus_bits`, Shamir shares of the
/// private exponent. The factorisation and private exponent are not kept.
/// With `os_entropy` the generator is seeded from the system RNG and `seed`
/// is ignored. Throws Error(invalid_params).
ThresholdKeyMaterial dealer_keygen(const ThresholdParams& params, unsigned modulus_bits,
                                   std::uint64_t seed, bool os_entropy = false);

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::string_view bytes);
std::string to_hex(const Digest& d);

/// Digest of the canonical alarm serialisation.
Digest alarm_digest(const Alarm& alarm);

/// Full-domain hash of a digest into Z_N.
mpz_class hash_to_modulus(const Digest& digest, const mpz_class& modulus);

struct ShareProof {
  mpz_class c;
  mpz_class z;
};

struct SignatureShare {
  unsigned node_id = 0;
  std::string key_id;
  Digest digest{};
  mpz_class value;
  ShareProof proof;
};

/// Deterministic: the proof randomness is derived from the share and digest.
SignatureShare node_sign(const KeyShare& share, const PublicMaterial& pub, const Alarm& alarm);

/// Throws Error(material_mismatch) when the share and public material come
/// from different key generations.
bool verify_share(const PublicMaterial& pub, const SignatureShare& share, const Alarm& alarm);

bool verify_complete(const PublicMaterial& pub, const mpz_class& signature, const Alarm& alarm);

/// Combines the first k shares (distinct nodes, in order). Throws
/// Error(insufficient_shares) or Error(combine_failure) when the result does
/// not verify.
mpz_class combine(const std::vector<SignatureShare>& shares, const Alarm& alarm,
                  const PublicMaterial& pub);

/// Flips bit `bit` of the share value (test and fault-injection hook).
SignatureShare corrupt(SignatureShare share, unsigned bit);

struct SignedRecord {
  std::uint64_t seq = 0;
  Alarm alarm;
  mpz_class signature;
  std::vector<unsigned> corrupted_nodes;
};

/// Per-alarm combiner state. submit() may be called from several threads.
class Combiner {
 public:
  Combiner(const PublicMaterial& pub, Alarm alarm);

  /// Returns true once a verified signature exists.
  bool submit(const SignatureShare& share);
  bool done() const;

  /// Throws Error(quorum_unreachable) when no signature could be formed.
  SignedRecord finish() const;

  std::vector<unsigned> corrupted() const;
  std::size_t combine_attempts() const;

 private:
  void try_combine();

  const PublicMaterial& pub_;
  Alarm alarm_;
  mutable std::mutex mu_;
  std::vector<SignatureShare> validated_;
  std::vector<SignatureShare> unverified_;
  std::set<unsigned> seen_;
  std::set<unsigned> corrupted_;
  std::optional<mpz_class> signature_;
  std::size_t attempts_ = 0;
};

enum class NodeBehavior { honest, corrupt, drop, delay };

NodeBehavior behavior_from_string(const std::string& s);
const char* to_string(NodeBehavior b) noexcept;

struct FaultModel {
  std::map<unsigned, NodeBehavior> nodes;  // absent = honest
  std::uint64_t seed = 0;                  // picks the flipped bit

  NodeBehavior of(unsigned node) const;
};

/// Runs every node on the alarm and feeds the combiner in arrival order:
/// non-delayed nodes by id, then delayed ones. Corrupt nodes send a
/// bit-flipped share, dropped nodes send nothing.
SignedRecord process_alarm(const Alarm& alarm, const ThresholdKeyMaterial& keys,
                           const FaultModel& faults);

// ---------------------------------------------------------------------------
// Store: 4-byte big-endian length, then one canonical JSON record.

std::string encode_record(const SignedRecord& r);

class RecordStore {
 public:
  /// Opens (creating if needed) the file and reads the last sequence number.
  explicit RecordStore(std::filesystem::path path);

  /// Assigns the next sequence number and appends. Returns the stored record.
  SignedRecord append(SignedRecord record);

  std::uint64_t next_seq() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::uint64_t next_ = 1;
};

struct AuditFailure {
  std::size_t index = 0;  // 0-based frame position
  std::optional<std::uint64_t> seq;
  std::string reason;
};

struct AuditReport {
  std::size_t records = 0;
  std::vector<AuditFailure> failures;

  bool ok() const { return failures.empty(); }
};

AuditReport audit(const std::filesystem::path& store, const PublicMaterial& pub);
AuditReport audit_bytes(std::string_view bytes, const PublicMaterial& pub);

/// Reads every well-formed record, stopping at the first framing error.
std::vector<SignedRecord> read_records(const std::filesystem::path& store);

nlohmann::ordered_json audit_to_json(const AuditReport& r);
nlohmann::ordered_json public_to_json(const PublicMaterial& pub);
PublicMaterial public_from_json(const nlohmann::json& j);

/// One dead-letter line for an alarm that could not be signed.
std::string dead_letter_line(const Alarm& alarm, const std::string& reason);

}  // namespace siem::res
