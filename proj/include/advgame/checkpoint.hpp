#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "advgame/constraint.hpp"
#include "advgame/models.hpp"

namespace advgame {

inline constexpr const char* kArtifactVersion = "advgame-0.1.0";
inline constexpr int kCheckpointFormat = 1;

struct Manifest {
  std::string role;  // f, f_pgd, f_clean, lambda, ...
  Task task;
  std::optional<LpConstraint> constraint;
  std::uint64_t dataset_fingerprint = 0;
  std::uint64_t seed = 0;
  std::string artifact_version = kArtifactVersion;
  std::size_t epoch = 0;
};

// Checkpoints are JSON documents: layer specs plus the flat parameter vector,
// written with shortest round-trip doubles so the payload reloads bit-exactly.

std::string defense_to_json(const DefenseNet& f, const Manifest& manifest);
DefenseNet defense_from_json(const std::string& text, Manifest* manifest = nullptr);
std::string attack_to_json(const AttackModel& attack, const Manifest& manifest);
AttackModel attack_from_json(const std::string& text, Manifest* manifest = nullptr);

void save_defense(const std::filesystem::path& path, const DefenseNet& f, const Manifest& manifest);
DefenseNet load_defense(const std::filesystem::path& path, Manifest* manifest = nullptr);
void save_attack(const std::filesystem::path& path, const AttackModel& attack,
                 const Manifest& manifest);
AttackModel load_attack(const std::filesystem::path& path, Manifest* manifest = nullptr);

/// "defense" or "attack", read from the checkpoint header.
std::string checkpoint_kind(const std::filesystem::path& path);

std::string hex64(std::uint64_t v);
std::uint64_t parse_hex64(const std::string& text);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace advgame
