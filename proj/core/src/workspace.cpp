#include "geovid/workspace.hpp"

#include <cstdio>

namespace geovid {

std::filesystem::path VideoPaths::feature_file(int level, int frame) const {
  char name[32];
  std::snprintf(name, sizeof name, "%06d.bin", frame);
  return features() / std::to_string(level) / name;
}

}  // namespace geovid
