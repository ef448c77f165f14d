#include "moocdb/cli.hpp"

#include <charconv>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "moocdb/analytics.hpp"
#include "moocdb/export.hpp"
#include "moocdb/ingest.hpp"
#include "moocdb/partition.hpp"
#include "moocdb/problem_tree.hpp"
#include "moocdb/store_io.hpp"
#include "moocdb/synthgen.hpp"
#include "moocdb/validate.hpp"

namespace moocdb {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Thrown by subcommand handlers that have already decided the exit code.
struct Exit {
  int code;
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw io::StoreIoError("cannot write " + p.string());
}

struct LevelArgs {
  std::string level;
  bool with_collaboration = false;
  bool no_collaboration = false;

  void add_to(CLI::App* cmd, bool required) {
    auto* opt = cmd->add_option("--level", level, "multi_course | single_course | table_level");
    if (required) opt->required();
    cmd->add_flag("--with-collaboration", with_collaboration, "include collaboration tables");
    cmd->add_flag("--no-collaboration", no_collaboration, "omit collaboration tables (default)");
  }

  std::optional<AccessLevel> get() const {
    if (level.empty()) return std::nullopt;
    auto l = AccessLevel::parse(level);
    if (!l) throw CLI::ValidationError("--level", "unknown access level '" + level + "'");
    if (with_collaboration) l->collaboration_included = true;
    if (no_collaboration) l->collaboration_included = false;
    return l;
  }
};

// A store file/dir, or one course of a partition seen through its manifest.
CourseStore open_view(const fs::path& in, const std::string& course, std::optional<AccessLevel> level) {
  CourseStore s;
  if (fs::is_directory(in) && fs::exists(in / "manifest.json") && !fs::exists(in / "store.json")) {
    PartitionManifest m = load_manifest(in);
    std::string dir = course.empty() ? "" : course_dir_name(course);
    if (dir.empty()) {
      if (m.courses.size() != 1) {
        throw CLI::ValidationError("--course", "partition holds several courses; pick one with --course");
      }
      dir = m.courses.front();
    }
    s = io::load_csv_dir(in / dir);
    TableSet visible;
    for (Table t : s.present.tables()) {
      if (m.included.contains(t)) visible.insert(t);
    }
    s.present = visible;
  } else {
    s = io::load_store(in);
  }
  if (level) {
    TableSet allowed = tables_for(*level);
    TableSet visible;
    for (Table t : s.present.tables()) {
      if (allowed.contains(t)) visible.insert(t);
    }
    s.present = visible;
  }
  return s;
}

std::optional<Timestamp> time_arg(const std::string& flag, const std::string& v) {
  if (v.empty()) return std::nullopt;
  auto t = parse_timestamp(v);
  if (!t) throw CLI::ValidationError(flag, "not an ISO-8601 UTC timestamp: " + v);
  return t;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"MOOC log normalization, partitioning and analytics"};
  app.require_subcommand(1);
  bool as_json = false;

  auto json_flag = [&](CLI::App* cmd) { cmd->add_flag("--json", as_json, "print a JSON summary"); };
  std::string key_file;
  auto key_flag = [&](CLI::App* cmd) {
    cmd->add_option("--key-file", key_file, "file holding the hex secret (else MOOCDB_SECRET_KEY)");
  };

  // gen
  GenSpec gen;
  std::string gen_out, gen_plant = "none", gen_format = "canonical";
  std::size_t gen_events = 0;
  auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic course");
  gen_cmd->add_option("--out", gen_out, "output directory")->required();
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--users", gen.users);
  gen_cmd->add_option("--weeks", gen.weeks);
  gen_cmd->add_option("--events", gen_events, "total raw events (default 20 per user)");
  gen_cmd->add_option("--problems", gen.problems_per_homework, "problems per homework");
  gen_cmd->add_option("--videos", gen.videos_per_week, "videos per week");
  gen_cmd->add_option("--lectures", gen.lectures_per_week, "lecture pages per week");
  gen_cmd->add_option("--certified", gen.certificate_fraction, "fraction of users certified");
  gen_cmd->add_option("--course-id", gen.course_id);
  gen_cmd->add_option("--plant", gen_plant, "none | noisy | linear | constant");
  gen_cmd->add_option("--planted-r", gen.planted_r);
  gen_cmd->add_option("--study-week", gen.study_week);
  gen_cmd->add_option("--format", gen_format, "canonical | verbose");
  json_flag(gen_cmd);

  // ingest
  std::vector<std::string> ingest_in;
  std::string ingest_out, ingest_structure, ingest_config;
  auto* ingest_cmd = app.add_subcommand("ingest", "normalize raw logs into a store");
  ingest_cmd->add_option("--in", ingest_in, "raw log files, or a generated course directory")->required();
  ingest_cmd->add_option("--out", ingest_out, "store directory, or .db/.sqlite file")->required();
  ingest_cmd->add_option("--structure", ingest_structure, "course structure JSON");
  ingest_cmd->add_option("--config", ingest_config, "ingest config JSON");
  key_flag(ingest_cmd);
  json_flag(ingest_cmd);

  // validate
  std::string validate_in;
  auto* validate_cmd = app.add_subcommand("validate", "check every schema invariant");
  validate_cmd->add_option("--in", validate_in)->required();
  json_flag(validate_cmd);

  // partition
  std::vector<std::string> part_in;
  std::string part_out;
  std::vector<std::string> part_tables;
  LevelArgs part_level;
  auto* part_cmd = app.add_subcommand("partition", "export the tables of one access level");
  part_cmd->add_option("--in", part_in, "one store per course")->required();
  part_cmd->add_option("--out", part_out)->required();
  part_cmd->add_option("--tables", part_tables, "restrict to these tables");
  part_level.add_to(part_cmd, true);
  json_flag(part_cmd);

  // audit
  std::string audit_in;
  auto* audit_cmd = app.add_subcommand("audit", "report which tables can be joined on user keys");
  audit_cmd->add_option("--in", audit_in, "partition directory")->required();
  json_flag(audit_cmd);

  // stat
  std::string stat_in, stat_name, stat_from, stat_to, stat_cohort, stat_space, stat_course, stat_out;
  bool stat_list = false;
  LevelArgs stat_level;
  auto* stat_cmd = app.add_subcommand("stat", "evaluate a named statistic over cuts");
  stat_cmd->add_option("--in", stat_in, "store or partition");
  stat_cmd->add_option("--name", stat_name);
  stat_cmd->add_flag("--list", stat_list, "list shipped statistics");
  stat_cmd->add_option("--from", stat_from, "window start (inclusive)");
  stat_cmd->add_option("--to", stat_to, "window end (exclusive)");
  stat_cmd->add_option("--cohort", stat_cohort, "e.g. certified,final_grade>=0.5");
  stat_cmd->add_option("--space", stat_space, "none | by_country | country=CODE");
  stat_cmd->add_option("--course", stat_course, "course inside a multi-course partition");
  stat_cmd->add_option("--out", stat_out, "write CSV here");
  stat_level.add_to(stat_cmd, false);
  json_flag(stat_cmd);

  // correlate
  std::string corr_in, corr_problem, corr_course, corr_out;
  LevelArgs corr_level;
  auto* corr_cmd = app.add_subcommand("correlate", "video time against homework correctness");
  corr_cmd->add_option("--in", corr_in)->required();
  corr_cmd->add_option("--problem", corr_problem, "homework problem_id or name")->required();
  corr_cmd->add_option("--course", corr_course);
  corr_cmd->add_option("--out", corr_out, "write per-user pairs CSV here");
  corr_level.add_to(corr_cmd, false);
  json_flag(corr_cmd);

  // export
  std::string exp_in, exp_format, exp_out, exp_course;
  auto* exp_cmd = app.add_subcommand("export", "write BKT / IRT inputs or plain table dumps");
  exp_cmd->add_option("--in", exp_in)->required();
  exp_cmd->add_option("--format", exp_format, "bkt | irt | tables")->required();
  exp_cmd->add_option("--out", exp_out)->required();
  exp_cmd->add_option("--course", exp_course);
  json_flag(exp_cmd);

  std::vector<const char*> argv{"moocdb"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitUsage;
  }

  auto emit = [&](const json& j) { out << j.dump(2) << '\n'; };

  try {
    if (gen_cmd->parsed()) {
      if (gen_events > 0 || gen_cmd->count("--events")) gen.events = gen_events;
      auto plant = plant_from_name(gen_plant);
      if (!plant) throw CLI::ValidationError("--plant", "unknown plant '" + gen_plant + "'");
      gen.plant = *plant;
      if (gen_format != "canonical" && gen_format != "verbose") {
        throw CLI::ValidationError("--format", "expected canonical or verbose");
      }
      gen.format = gen_format == "verbose" ? RawFormat::verbose : RawFormat::canonical;
      GeneratedCourse course = generate(gen);
      GeneratedFiles files = write_generated(course, gen_out);
      if (as_json) {
        json j;
        j["structure"] = files.structure.string();
        j["log"] = files.log.string();
        j["pii"] = files.pii.string();
        j["ground_truth"] = files.ground_truth.string();
        j["events"] = course.truth.total_events;
        j["users"] = course.truth.users.size();
        emit(j);
      } else {
        out << "wrote " << course.truth.total_events << " events for " << course.truth.users.size()
            << " users to " << gen_out << '\n';
      }
      return kExitOk;
    }

    if (ingest_cmd->parsed()) {
      IngestConfig config = ingest_config.empty() ? IngestConfig{} : IngestConfig::load(ingest_config);
      std::vector<fs::path> logs;
      fs::path structure_path = ingest_structure;
      for (const auto& in : ingest_in) {
        if (fs::is_directory(in)) {
          if (structure_path.empty()) structure_path = fs::path(in) / "structure.json";
          std::vector<fs::path> found;
          for (const auto& e : fs::directory_iterator(in)) {
            std::string name = e.path().filename().string();
            if (e.is_regular_file() && name.starts_with("events") && name.ends_with(".jsonl")) {
              found.push_back(e.path());
            }
          }
          std::sort(found.begin(), found.end());
          logs.insert(logs.end(), found.begin(), found.end());
        } else {
          logs.emplace_back(in);
        }
      }
      if (structure_path.empty()) {
        throw CLI::ValidationError("--structure", "required unless --in names a course directory");
      }
      CourseStructure structure = load_structure(structure_path, config);
      std::vector<Source> sources;
      for (const auto& p : logs) {
        std::shared_ptr<const SourceAdapter> adapter = make_adapter(config.adapter_for(p));
        sources.push_back({adapter, p});
      }
      SecretKey key = SecretKey::load(key_file.empty() ? std::nullopt : std::optional<fs::path>(key_file));
      IngestResult r = ingest(sources, structure, config, key, fs::path(ingest_out));
      if (as_json) {
        emit(r.report.to_json());
      } else {
        out << "read " << r.report.lines_read << " lines, emitted " << r.report.rows_emitted
            << ", rejected " << r.report.lines_rejected << "; store at " << ingest_out << '\n';
      }
      return kExitOk;
    }

    if (validate_cmd->parsed()) {
      CourseStore s = io::load_store(validate_in);
      ValidationReport rep = validate_store(s);
      if (as_json) {
        json j;
        j["ok"] = rep.ok();
        j["violations"] = json::array();
        for (const auto& v : rep.violations) {
          j["violations"].push_back(
              {{"table", table_name(v.table)}, {"row", v.row_key}, {"invariant", v.invariant}});
        }
        emit(j);
      } else {
        for (const auto& v : rep.violations) out << to_string(v) << '\n';
        out << (rep.ok() ? "ok" : std::to_string(rep.violations.size()) + " violation(s)") << '\n';
      }
      return rep.ok() ? kExitOk : kExitInvalid;
    }

    if (part_cmd->parsed()) {
      AccessLevel level = *part_level.get();
      std::vector<CourseStore> stores;
      for (const auto& in : part_in) {
        CourseStore s = io::load_store(in);
        ValidationReport rep = validate_store(s);
        if (!rep.ok()) {
          err << in << ": " << to_string(rep.violations.front()) << '\n';
          return kExitInvalid;
        }
        stores.push_back(std::move(s));
      }
      PartitionManifest m = export_partition(stores, level, part_out, part_tables);
      if (as_json) {
        emit(m.to_json());
      } else {
        out << "level " << level.name() << ": ";
        for (const auto& n : m.included.names()) out << n << ' ';
        out << "\nchecksum " << m.export_checksum << '\n';
      }
      return kExitOk;
    }

    if (audit_cmd->parsed()) {
      LinkabilityReport rep = audit_linkability(audit_in);
      if (as_json) {
        emit(rep.to_json());
      } else {
        out << "level " << rep.level << ": " << rep.cross_mode_paths << " cross-mode join path(s), "
            << rep.cross_course_paths << " cross-course join path(s)\n";
        for (const auto& w : rep.warnings) out << "warning: " << w << '\n';
      }
      return kExitOk;
    }

    if (stat_cmd->parsed()) {
      if (stat_list) {
        for (const auto& d : builtin_statistics()) {
          out << d.name << "\t" << aggregation_name(d.aggregation) << "\t" << measure_name(d.target) << "\t"
              << d.description << '\n';
        }
        return kExitOk;
      }
      if (stat_in.empty() || stat_name.empty()) {
        err << "stat needs --in and --name (or --list)\n";
        return kExitUsage;
      }
      const StatisticDef* def = find_statistic(stat_name);
      if (!def) {
        err << "unknown statistic '" << stat_name << "'\n";
        return kExitUsage;
      }
      CutSpec cuts = def->default_cuts;
      if (!stat_from.empty()) cuts.from = time_arg("--from", stat_from);
      if (!stat_to.empty()) cuts.to = time_arg("--to", stat_to);
      if (!stat_cohort.empty()) cuts.cohort = Cohort::parse(stat_cohort);
      if (!stat_space.empty()) cuts.space = SpaceSpec::parse(stat_space);
      CourseStore s = open_view(stat_in, stat_course, stat_level.get());
      StatResult res = compute_statistic(s, *def, cuts);
      if (!stat_out.empty()) write_text(stat_out, res.to_csv());
      if (as_json) {
        emit(res.to_json());
      } else if (stat_out.empty()) {
        out << res.to_csv();
      }
      return kExitOk;
    }

    if (corr_cmd->parsed()) {
      CourseStore s = open_view(corr_in, corr_course, corr_level.get());
      Id problem = 0;
      auto [p, ec] = std::from_chars(corr_problem.data(), corr_problem.data() + corr_problem.size(), problem);
      if (ec != std::errc{} || p != corr_problem.data() + corr_problem.size()) {
        problem = 0;
        for (const auto& row : s.problems) {
          if (row.problem_name == corr_problem) problem = row.problem_id;
        }
        if (problem == 0) throw CorrelationError("no problem named '" + corr_problem + "'");
      }
      CorrelationResult res = video_homework_correlation(s, problem);
      if (!corr_out.empty()) {
        std::string csv_text = csv::format_row({"course_user_id", "video_seconds", "submissions", "correct"});
        for (const auto& pr : res.pairs) {
          csv_text += csv::format_row({std::to_string(pr.course_user_id), format_value(pr.video_seconds),
                                       std::to_string(pr.submissions), std::to_string(pr.correct)});
        }
        write_text(corr_out, csv_text);
      }
      if (as_json) {
        json j = res.to_json();
        j.erase("pairs");
        emit(j);
      } else if (res.r) {
        out << "week " << res.week << " problem " << res.problem_id << ": r = " << format_value(*res.r)
            << " over n = " << res.n << '\n';
      } else {
        out << "week " << res.week << " problem " << res.problem_id << ": r undefined ("
            << res.undefined_reason << "), n = " << res.n << '\n';
      }
      return kExitOk;
    }

    if (exp_cmd->parsed()) {
      CourseStore s = open_view(exp_in, exp_course, std::nullopt);
      if (exp_format == "bkt") {
        write_text(exp_out, export_bkt(s));
      } else if (exp_format == "irt") {
        write_text(exp_out, export_irt(s));
      } else if (exp_format == "tables") {
        io::save_csv_dir(s, exp_out);
      } else {
        err << "unknown export format '" << exp_format << "'\n";
        return kExitUsage;
      }
      if (as_json) emit({{"format", exp_format}, {"out", exp_out}});
      return kExitOk;
    }
  } catch (const CLI::ValidationError& e) {
    err << e.what() << '\n';
    return kExitUsage;
  } catch (const CapabilityError& e) {
    err << e.what() << '\n';
    return kExitAccess;
  } catch (const AccessError& e) {
    err << e.what() << '\n';
    return kExitAccess;
  } catch (const KeyError& e) {
    err << e.what() << '\n';
    return kExitAccess;
  } catch (const SpecError& e) {
    err << e.what() << '\n';
    return kExitInvalid;
  } catch (const CorrelationError& e) {
    err << e.what() << '\n';
    return kExitInvalid;
  } catch (const StructureError& e) {
    err << e.what() << '\n';
    return kExitInvalid;
  } catch (const IngestError& e) {
    err << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::invalid_argument& e) {
    err << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    // Store, config and adapter I/O or parse failures.
    err << e.what() << '\n';
    return kExitIo;
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace moocdb
