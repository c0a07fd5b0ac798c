#include "planenav/volume_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace planenav {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& why) {
    throw std::runtime_error(path + ": " + why);
}

std::string read_header_line(std::ifstream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line)) fail(path, "missing header line");
    return line;
}

void write_f32_array(std::ofstream& out, const std::vector<float>& buf) {
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

void read_f32_array(std::ifstream& in, std::vector<float>& buf, const std::string& path) {
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != buf.size() * sizeof(float))
        fail(path, "truncated payload");
}

// Write-then-rename so readers never observe a half-written file.
class AtomicFile {
  public:
    explicit AtomicFile(const std::string& path)
        : path_(path), tmp_(path + ".tmp"), out_(tmp_, std::ios::binary | std::ios::trunc) {
        if (!out_) fail(tmp_, "cannot open for writing");
    }
    std::ofstream& stream() { return out_; }
    void commit() {
        out_.flush();
        if (!out_) fail(tmp_, "write failed");
        out_.close();
        std::filesystem::rename(tmp_, path_);
    }

  private:
    std::string path_, tmp_;
    std::ofstream out_;
};

}  // namespace

void save_f4d(const std::string& path, const FlowVolume4D& vol) {
    if (vol.frames <= 0 || vol.dims.count() == 0) fail(path, "empty volume");
    json header = {{"magic", "F4D1"},
                   {"dims", {vol.frames, vol.dims.z, vol.dims.y, vol.dims.x}},
                   {"spacing", {vol.spacing.x, vol.spacing.y, vol.spacing.z}},
                   {"venc", vol.venc}};
    AtomicFile file(path);
    std::ofstream& out = file.stream();
    out << header.dump() << '\n';

    const std::size_t n = static_cast<std::size_t>(vol.frames) * vol.voxels();
    std::vector<float> buf(n);
    for (std::size_t i = 0; i < n; ++i) buf[i] = static_cast<float>(vol.magnitude[i]);
    write_f32_array(out, buf);
    for (int c = 0; c < 3; ++c) {
        for (int t = 0; t < vol.frames; ++t) {
            const std::size_t src = (static_cast<std::size_t>(t) * 3 + c) * vol.voxels();
            const std::size_t dst = static_cast<std::size_t>(t) * vol.voxels();
            for (std::size_t i = 0; i < vol.voxels(); ++i)
                buf[dst + i] = static_cast<float>(vol.velocity[src + i]);
        }
        write_f32_array(out, buf);
    }
    file.commit();
}

FlowVolume4D load_f4d(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    json header = json::parse(read_header_line(in, path), nullptr, false);
    if (header.is_discarded()) fail(path, "malformed header JSON");
    if (header.value("magic", "") != std::string("F4D1")) fail(path, "bad magic");

    auto dims = header.at("dims");
    auto spacing = header.at("spacing");
    if (dims.size() != 4 || spacing.size() != 3) fail(path, "malformed dims/spacing");

    FlowVolume4D vol;
    vol.frames = dims[0].get<int>();
    vol.dims = {dims[1].get<int>(), dims[2].get<int>(), dims[3].get<int>()};
    vol.spacing = {spacing[0].get<double>(), spacing[1].get<double>(), spacing[2].get<double>()};
    vol.venc = header.at("venc").get<double>();
    if (vol.frames <= 0 || vol.dims.z <= 0 || vol.dims.y <= 0 || vol.dims.x <= 0)
        fail(path, "non-positive dims");
    if (!(std::isfinite(vol.spacing.x) && vol.spacing.x > 0 && std::isfinite(vol.spacing.y) &&
          vol.spacing.y > 0 && std::isfinite(vol.spacing.z) && vol.spacing.z > 0))
        fail(path, "invalid spacing");
    if (!(std::isfinite(vol.venc) && vol.venc > 0)) fail(path, "invalid venc");

    const std::size_t n = static_cast<std::size_t>(vol.frames) * vol.dims.count();
    vol.magnitude.resize(n);
    vol.velocity.resize(3 * n);
    std::vector<float> buf(n);

    read_f32_array(in, buf, path);
    for (std::size_t i = 0; i < n; ++i) vol.magnitude[i] = buf[i];
    for (int c = 0; c < 3; ++c) {
        read_f32_array(in, buf, path);
        for (int t = 0; t < vol.frames; ++t) {
            const std::size_t dst = (static_cast<std::size_t>(t) * 3 + c) * vol.dims.count();
            const std::size_t src = static_cast<std::size_t>(t) * vol.dims.count();
            for (std::size_t i = 0; i < vol.dims.count(); ++i) {
                double val = buf[src + i];
                vol.velocity[dst + i] = std::clamp(val, -vol.venc, vol.venc);
            }
        }
    }
    if (in.peek() != std::ifstream::traits_type::eof()) fail(path, "trailing bytes after payload");
    return vol;
}

void save_s3d(const std::string& path, const ScalarVolume3D& vol) {
    if (vol.dims.count() == 0) fail(path, "empty volume");
    json header = {{"magic", "S3D1"},
                   {"dims", {vol.dims.z, vol.dims.y, vol.dims.x}},
                   {"spacing", {vol.spacing.x, vol.spacing.y, vol.spacing.z}}};
    AtomicFile file(path);
    file.stream() << header.dump() << '\n';
    std::vector<float> buf(vol.v.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(vol.v[i]);
    write_f32_array(file.stream(), buf);
    file.commit();
}

ScalarVolume3D load_s3d(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    json header = json::parse(read_header_line(in, path), nullptr, false);
    if (header.is_discarded()) fail(path, "malformed header JSON");
    if (header.value("magic", "") != std::string("S3D1")) fail(path, "bad magic");
    auto dims = header.at("dims");
    auto spacing = header.at("spacing");
    if (dims.size() != 3 || spacing.size() != 3) fail(path, "malformed dims/spacing");

    ScalarVolume3D vol;
    vol.dims = {dims[0].get<int>(), dims[1].get<int>(), dims[2].get<int>()};
    vol.spacing = {spacing[0].get<double>(), spacing[1].get<double>(), spacing[2].get<double>()};
    if (vol.dims.z <= 0 || vol.dims.y <= 0 || vol.dims.x <= 0) fail(path, "non-positive dims");

    std::vector<float> buf(vol.dims.count());
    read_f32_array(in, buf, path);
    vol.v.assign(buf.begin(), buf.end());
    if (in.peek() != std::ifstream::traits_type::eof()) fail(path, "trailing bytes after payload");
    return vol;
}

const std::vector<double>* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, arr] : arrays)
        if (n == name) return &arr;
    return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    json manifest = {{"magic", "PNCK1"}, {"step", ckpt.step}};
    if (std::isfinite(ckpt.score))
        manifest["score"] = ckpt.score;
    else
        manifest["score"] = "inf";
    json arrays = json::array();
    for (const auto& [name, arr] : ckpt.arrays)
        arrays.push_back({{"name", name}, {"count", arr.size()}});
    manifest["arrays"] = arrays;

    AtomicFile file(path);
    std::ofstream& out = file.stream();
    out << manifest.dump() << '\n';
    for (const auto& [name, arr] : ckpt.arrays) {
        std::uint64_t count = arr.size();
        out.write(reinterpret_cast<const char*>(&count), sizeof(count));
        out.write(reinterpret_cast<const char*>(arr.data()),
                  static_cast<std::streamsize>(arr.size() * sizeof(double)));
    }
    file.commit();
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    json manifest = json::parse(read_header_line(in, path), nullptr, false);
    if (manifest.is_discarded()) fail(path, "malformed manifest JSON");
    if (manifest.value("magic", "") != std::string("PNCK1")) fail(path, "bad magic");

    Checkpoint ckpt;
    ckpt.step = manifest.at("step").get<std::uint64_t>();
    if (manifest.at("score").is_string())
        ckpt.score = std::numeric_limits<double>::infinity();
    else
        ckpt.score = manifest.at("score").get<double>();

    for (const auto& entry : manifest.at("arrays")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::uint64_t expect = entry.at("count").get<std::uint64_t>();
        std::uint64_t count = 0;
        in.read(reinterpret_cast<char*>(&count), sizeof(count));
        if (!in || count != expect) fail(path, "array '" + name + "': length prefix mismatch");
        std::vector<double> arr(count);
        in.read(reinterpret_cast<char*>(arr.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double))
            fail(path, "array '" + name + "': truncated");
        ckpt.arrays.emplace_back(name, std::move(arr));
    }
    if (in.peek() != std::ifstream::traits_type::eof()) fail(path, "trailing bytes after payload");
    return ckpt;
}

}  // namespace planenav
