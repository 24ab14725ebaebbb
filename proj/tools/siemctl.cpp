// siemctl: command-line front end over the siem C API.
//
// Precedence for every input: explicit flag, then the --config document,
// then the previous stage's artifact inside --out.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "siem/siem.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFindings = 1;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct ConfigError {
  std::string message;
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool os_entropy = false;
};

// The parts of the pipeline config the stage subcommands need as defaults.
struct Defaults {
  fs::path base;
  nlohmann::json doc = nlohmann::json::object();

  std::optional<std::string> path(const char* key) const {
    auto it = doc.find(key);
    if (it == doc.end() || !it->is_string()) return std::nullopt;
    fs::path p = it->get<std::string>();
    return (p.is_absolute() ? p : base / p).string();
  }
};

Defaults load_defaults(const Options& o) {
  Defaults d;
  if (o.config.empty()) return d;
  std::ifstream in(o.config);
  if (!in) throw ConfigError{"cannot open " + o.config};
  try {
    d.doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError{o.config + ": " + e.what()};
  }
  if (!d.doc.is_object()) throw ConfigError{o.config + ": expected an object"};
  d.base = fs::path(o.config).parent_path();
  return d;
}

std::string out_dir(const Options& o, const Defaults& d) {
  if (!o.out.empty()) return o.out;
  if (auto p = d.path("out_dir")) return *p;
  return "out";
}

std::string pick(const std::string& flag, const std::optional<std::string>& fallback,
                 const char* what) {
  if (!flag.empty()) return flag;
  if (fallback) return *fallback;
  throw ConfigError{std::string("no ") + what + " given (flag or config)"};
}

using ContextPtr = std::unique_ptr<siem_context, decltype(&siem_context_free)>;

int report(siem_context* ctx, siem_status st) {
  if (st == SIEM_OK) return kExitOk;
  nlohmann::ordered_json err;
  if (*siem_last_stage(ctx)) err["stage"] = siem_last_stage(ctx);
  err["kind"] = siem_status_name(st);
  err["message"] = siem_last_error(ctx);
  std::cerr << err.dump() << "\n";
  return siem_status_is_config_error(st) ? kExitConfig : kExitStage;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"siemctl: event collection, correlation, policy analysis and resilient storage"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(siem_version()));

  Options o;
  app.add_option("--config", o.config, "pipeline configuration JSON");
  app.add_option("--seed", o.seed, "seed overriding the config");
  app.add_option("--out", o.out, "output directory");
  app.add_flag("--os-entropy", o.os_entropy, "generate keys from the system RNG instead of the seed");

  auto* run = app.add_subcommand("run", "full pipeline");

  std::string collector;
  auto* collect = app.add_subcommand("collect", "parse raw logs into events.jsonl");
  collect->add_option("--collector", collector, "collector config");

  std::string events, rules;
  auto* correlate = app.add_subcommand("correlate", "events.jsonl -> alarms.jsonl");
  correlate->add_option("--events", events, "event JSON-lines");
  correlate->add_option("--rules", rules, "correlation rules");

  std::string policies, system, hierarchy;
  auto* resolve = app.add_subcommand("resolve-conflicts", "policy anomalies and AHP resolution");
  resolve->add_option("--policies", policies);
  resolve->add_option("--system", system);
  resolve->add_option("--hierarchy", hierarchy);

  std::string resolutions;
  bool no_react = false;
  auto* reach = app.add_subcommand("reachability", "firewall reachability analysis");
  reach->add_option("--policies", policies);
  reach->add_option("--system", system);
  reach->add_option("--resolutions", resolutions, "resolutions.json; dropped policies are ignored");
  reach->add_flag("--no-react", no_react, "skip applying the remediation");

  std::string remediation, output;
  auto* react = app.add_subcommand("react", "apply remediation.json to a system description");
  react->add_option("--system", system);
  react->add_option("--remediation", remediation);
  react->add_option("--output", output, "reacted system description");

  std::string alarms;
  unsigned n = 0, k = 0, key_bits = 0;
  auto* sign = app.add_subcommand("res-sign", "threshold-sign alarms into store.res");
  sign->add_option("--alarms", alarms);
  sign->add_option("-n", n, "key shares");
  sign->add_option("-k", k, "threshold");
  sign->add_option("--key-bits", key_bits);

  std::string store, pub, audit_report;
  auto* audit = app.add_subcommand("res-audit", "verify every record of a store");
  audit->add_option("--store", store);
  audit->add_option("--public", pub, "res_public.json");
  audit->add_option("--report", audit_report, "audit report output");

  auto* dam = app.add_subcommand("dam-sim", "write the misuse-case scenario bundle");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  ContextPtr ctx(siem_context_new(), &siem_context_free);
  if (!ctx) return kExitStage;
  siem_context_set_os_entropy(ctx.get(), o.os_entropy);
  siem_context* c = ctx.get();

  try {
    if (run->parsed()) {
      if (o.config.empty()) throw ConfigError{"run needs --config"};
      int code = 0;
      auto st = siem_run_pipeline(c, o.config.c_str(), o.out.empty() ? nullptr : o.out.c_str(),
                                  o.seed.has_value(), o.seed.value_or(0), &code);
      if (st != SIEM_OK) return report(c, st);
      return code;
    }

    const Defaults d = load_defaults(o);
    const std::string out = out_dir(o, d);
    const fs::path outp(out);

    if (dam->parsed()) return report(c, siem_dam_sim(c, out.c_str()));

    if (collect->parsed()) {
      auto cfg = pick(collector, d.path("collector"), "collector config");
      std::size_t ev = 0, q = 0;
      auto st = siem_collect(c, cfg.c_str(), out.c_str(), &ev, &q);
      if (st == SIEM_OK) std::cout << "events " << ev << " quarantined " << q << "\n";
      return report(c, st);
    }

    if (correlate->parsed()) {
      auto ev = pick(events, (outp / "events.jsonl").string(), "events");
      auto ru = pick(rules, d.path("rules"), "rules");
      std::size_t count = 0;
      auto st = siem_correlate(c, ev.c_str(), ru.c_str(), out.c_str(), &count);
      if (st == SIEM_OK) std::cout << "alarms " << count << "\n";
      return report(c, st);
    }

    if (resolve->parsed()) {
      auto po = pick(policies, d.path("policies"), "policies");
      auto sy = pick(system, d.path("system"), "system description");
      std::optional<std::string> hi = hierarchy.empty() ? d.path("hierarchy") : hierarchy;
      std::size_t conflicts = 0;
      auto st = siem_resolve_conflicts(c, po.c_str(), sy.c_str(), hi ? hi->c_str() : nullptr,
                                       out.c_str(), &conflicts);
      if (st == SIEM_OK) std::cout << "conflicts " << conflicts << "\n";
      return report(c, st);
    }

    if (reach->parsed()) {
      auto po = pick(policies, d.path("policies"), "policies");
      auto sy = pick(system, d.path("system"), "system description");
      std::string re = resolutions;
      if (re.empty() && fs::is_regular_file(outp / "resolutions.json"))
        re = (outp / "resolutions.json").string();
      std::size_t pre = 0, post = 0;
      auto st = siem_reachability(c, po.c_str(), sy.c_str(), re.empty() ? nullptr : re.c_str(),
                                  out.c_str(), no_react ? 0 : 1, &pre, &post);
      if (st != SIEM_OK) return report(c, st);
      std::cout << "findings " << pre;
      if (!no_react) std::cout << " post " << post;
      std::cout << "\n";
      return (no_react ? pre : post) == 0 ? kExitOk : kExitFindings;
    }

    if (react->parsed()) {
      auto sy = pick(system, d.path("system"), "system description");
      auto rem = pick(remediation, (outp / "remediation.json").string(), "remediation");
      auto dst = pick(output, (outp / "system.reacted.json").string(), "output");
      fs::create_directories(fs::path(dst).parent_path().empty() ? fs::path(".")
                                                                 : fs::path(dst).parent_path());
      return report(c, siem_react(c, sy.c_str(), rem.c_str(), dst.c_str()));
    }

    if (sign->parsed()) {
      auto al = pick(alarms, (outp / "alarms.jsonl").string(), "alarms");
      const auto res = d.doc.value("res", nlohmann::json::object());
      if (n == 0) n = res.value("n", 4u);
      if (k == 0) k = res.value("k", 3u);
      if (key_bits == 0) key_bits = res.value("key_bits", 512u);
      const std::uint64_t seed = o.seed ? *o.seed : d.doc.value("seed", std::uint64_t{1});
      std::string faults = d.doc.contains("faults") ? d.doc["faults"].dump() : std::string();
      std::size_t stored = 0, dead = 0;
      auto st = siem_res_sign(c, al.c_str(), n, k, key_bits, seed,
                              faults.empty() ? nullptr : faults.c_str(), out.c_str(), &stored, &dead);
      if (st == SIEM_OK) std::cout << "stored " << stored << " dead_letters " << dead << "\n";
      return report(c, st);
    }

    if (audit->parsed()) {
      auto sto = pick(store, (outp / "store.res").string(), "store");
      auto pk = pick(pub, (outp / "res_public.json").string(), "public key");
      auto rp = pick(audit_report, (outp / "audit.json").string(), "report");
      std::size_t failures = 0;
      auto st = siem_res_audit(c, sto.c_str(), pk.c_str(), rp.c_str(), &failures);
      if (st != SIEM_OK) return report(c, st);
      std::ifstream in(rp);
      std::cout << in.rdbuf();
      return failures == 0 ? kExitOk : kExitFindings;
    }
  } catch (const ConfigError& e) {
    nlohmann::ordered_json err;
    err["kind"] = "invalid_config";
    err["message"] = e.message;
    std::cerr << err.dump() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitStage;
  }
  return kExitConfig;
}
