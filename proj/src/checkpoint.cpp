#include "recoverlab/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include "recoverlab/errors.hpp"

namespace recoverlab {

namespace {

using Mat = Eigen::MatrixXf;
using Vec = Eigen::VectorXf;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_i64(std::ostream& out, std::int64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::int64_t read_i64(std::istream& in) {
  std::int64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_mat(std::ostream& out, const Mat& m) {
  write_u32(out, static_cast<std::uint32_t>(m.rows()));
  write_u32(out, static_cast<std::uint32_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(float) * m.size()));
}

Mat read_mat(std::istream& in) {
  const auto rows = read_u32(in);
  const auto cols = read_u32(in);
  Mat m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(float) * m.size()));
  if (!in) throw CheckpointError("checkpoint: truncated tensor data");
  return m;
}

void write_vec(std::ostream& out, const Vec& v) { write_mat(out, v); }

Vec read_vec(std::istream& in) {
  Mat m = read_mat(in);
  if (m.cols() != 1) throw CheckpointError("checkpoint: expected a column vector");
  return Vec(m.col(0));
}

void write_net(std::ostream& out, const DenseNet<float>& net) {
  write_u32(out, static_cast<std::uint32_t>(net.num_layers()));
  for (int l = 0; l < net.num_layers(); ++l) {
    write_mat(out, net.W[l]);
    write_vec(out, net.b[l]);
  }
}

DenseNet<float> read_net(std::istream& in) {
  DenseNet<float> net;
  const auto layers = read_u32(in);
  for (std::uint32_t l = 0; l < layers; ++l) {
    net.W.push_back(read_mat(in));
    net.b.push_back(read_vec(in));
  }
  return net;
}

void write_adam(std::ostream& out, const AdamState<float>& a) {
  write_i64(out, a.step);
  write_u32(out, static_cast<std::uint32_t>(a.mW.size()));
  for (std::size_t l = 0; l < a.mW.size(); ++l) {
    write_mat(out, a.mW[l]);
    write_mat(out, a.vW[l]);
    write_vec(out, a.mb[l]);
    write_vec(out, a.vb[l]);
  }
}

AdamState<float> read_adam(std::istream& in) {
  AdamState<float> a;
  a.step = read_i64(in);
  const auto layers = read_u32(in);
  for (std::uint32_t l = 0; l < layers; ++l) {
    a.mW.push_back(read_mat(in));
    a.vW.push_back(read_mat(in));
    a.mb.push_back(read_vec(in));
    a.vb.push_back(read_vec(in));
  }
  return a;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("checkpoint: cannot write " + path);

  nlohmann::json header;
  header["config"] = ckpt.config_echo;
  header["cw"] = ckpt.cw;
  header["master_seed"] = ckpt.master_seed;
  header["env_steps"] = ckpt.env_steps;
  header["iteration"] = ckpt.iteration;
  header["value_output_scale"] = ckpt.value.output_scale;
  const std::string htext = header.dump();

  write_u32(out, kCheckpointMagic);
  write_u32(out, ckpt.format_version);
  write_i64(out, static_cast<std::int64_t>(htext.size()));
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));

  write_net(out, ckpt.policy.net);
  write_vec(out, ckpt.policy.log_std);
  write_net(out, ckpt.value.net);
  write_adam(out, ckpt.policy_adam);
  write_vec(out, ckpt.log_std_m);
  write_vec(out, ckpt.log_std_v);
  write_adam(out, ckpt.value_adam);
  if (!out) throw CheckpointError("checkpoint: write failure on " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path);

  if (read_u32(in) != kCheckpointMagic)
    throw CheckpointError("checkpoint: bad magic in " + path);
  Checkpoint ckpt;
  ckpt.format_version = read_u32(in);
  if (ckpt.format_version != kCheckpointVersion)
    throw CheckpointError("checkpoint: unsupported format version " +
                          std::to_string(ckpt.format_version));
  const auto hlen = read_i64(in);
  std::string htext(static_cast<std::size_t>(hlen), '\0');
  in.read(htext.data(), hlen);
  if (!in) throw CheckpointError("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(htext);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: corrupt header: ") + e.what());
  }
  ckpt.config_echo = header.at("config");
  ckpt.cw = header.at("cw").get<double>();
  ckpt.master_seed = header.at("master_seed").get<std::uint64_t>();
  ckpt.env_steps = header.at("env_steps").get<long>();
  ckpt.iteration = header.at("iteration").get<long>();

  ckpt.policy.net = read_net(in);
  ckpt.policy.log_std = read_vec(in);
  ckpt.value.net = read_net(in);
  ckpt.value.output_scale = header.at("value_output_scale").get<float>();
  ckpt.policy_adam = read_adam(in);
  ckpt.log_std_m = read_vec(in);
  ckpt.log_std_v = read_vec(in);
  ckpt.value_adam = read_adam(in);
  return ckpt;
}

}  // namespace recoverlab
