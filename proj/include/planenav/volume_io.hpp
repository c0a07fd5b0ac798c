#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "planenav/volume.hpp"

namespace planenav {

// Flow volume container format ("F4D1"):
//   - one UTF-8 JSON header line {"magic":"F4D1","dims":[T,Z,Y,X],
//     "spacing":[sx,sy,sz],"venc":v} terminated by '\n'
//   - four raw little-endian float32 arrays, each [T][Z][Y][X] row-major,
//     in order: magnitude, vx, vy, vz.
// File size is exactly header_bytes + 4*T*Z*Y*X*4. Velocity components are
// clamped to [-venc, venc] on load.
void save_f4d(const std::string& path, const FlowVolume4D& vol);
FlowVolume4D load_f4d(const std::string& path);

// Scalar volume format ("S3D1"): JSON header line {"magic":"S3D1",
// "dims":[Z,Y,X],"spacing":[sx,sy,sz]} + one float32 array [Z][Y][X].
void save_s3d(const std::string& path, const ScalarVolume3D& vol);
ScalarVolume3D load_s3d(const std::string& path);

// Named parameter arrays plus training metadata. score uses +inf as the
// "untrained" sentinel; arrays round-trip bit exactly (raw float64).
struct Checkpoint {
    std::uint64_t step = 0;
    double score = std::numeric_limits<double>::infinity();
    std::vector<std::pair<std::string, std::vector<double>>> arrays;

    const std::vector<double>* find(const std::string& name) const;
};

// On-disk layout ("PNCK1"): JSON manifest line {"magic","step","score",
// "arrays":[{"name","count"},...]} + per array a uint64 length prefix and
// that many float64 values, all little-endian. Writes go through a temp file
// and rename so a crash never leaves a partial checkpoint behind.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace planenav
