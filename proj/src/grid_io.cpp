#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>

#include "biharm/error.hpp"
#include "biharm/grid.hpp"

namespace biharm {

namespace {

constexpr char kMagic[4] = {'B', 'H', 'G', 'F'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw ParameterError("truncated grid file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace

void write_binary(std::ostream& out, const GridField& f, std::span<const std::uint8_t> flags) {
  const Lattice& lat = f.lattice();
  const DomainSpec& s = lat.spec();
  if (!flags.empty() && flags.size() != lat.size())
    throw ParameterError("flag block must hold one byte per node");
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.n));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.components()));
  put<double>(out, s.h);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.shape));
  const Point& base = s.shape == Shape::Box ? s.origin : s.center;
  for (int d = 0; d < s.n; ++d) put<double>(out, base[d]);
  put<double>(out, s.radius);
  for (int d = 0; d < s.n; ++d) put<double>(out, s.extents[d]);
  put<std::uint64_t>(out, lat.size());
  put<std::uint64_t>(out, flags.size());
  for (double v : f.values()) put<double>(out, v);
  if (!flags.empty()) out.write(reinterpret_cast<const char*>(flags.data()), static_cast<std::streamsize>(flags.size()));
  if (!out) throw ParameterError("failed to write grid file");
}

void write_binary(const std::string& path, const GridField& f, std::span<const std::uint8_t> flags) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParameterError("cannot open '" + path + "' for writing");
  write_binary(out, f, flags);
}

GridField read_binary(std::istream& in, std::vector<std::uint8_t>* flags) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw ParameterError("not a grid file");
  if (get<std::uint32_t>(in) != kVersion) throw ParameterError("unsupported grid file version");
  DomainSpec s;
  s.n = static_cast<int>(get<std::uint32_t>(in));
  if (s.n < 1 || s.n > kMaxDim) throw ParameterError("bad dimension in grid file");
  const int L = static_cast<int>(get<std::uint32_t>(in));
  s.h = get<double>(in);
  const auto tag = get<std::uint32_t>(in);
  if (tag > 2) throw ParameterError("bad shape tag in grid file");
  s.shape = static_cast<Shape>(tag);
  Point base{};
  for (int d = 0; d < s.n; ++d) base[d] = get<double>(in);
  (s.shape == Shape::Box ? s.origin : s.center) = base;
  s.radius = get<double>(in);
  for (int d = 0; d < s.n; ++d) s.extents[d] = get<double>(in);
  const auto count = get<std::uint64_t>(in);
  const auto flag_len = get<std::uint64_t>(in);

  auto lat = build_domain(s, 0.0);
  if (lat->size() != count) throw ParameterError("node count does not match the stored domain");
  GridField f(lat, L);
  for (double& v : f.values()) v = get<double>(in);
  std::vector<std::uint8_t> block(flag_len);
  if (flag_len && !in.read(reinterpret_cast<char*>(block.data()), static_cast<std::streamsize>(flag_len)))
    throw ParameterError("truncated flag block");
  if (flags) *flags = std::move(block);
  return f;
}

GridField read_binary(const std::string& path, std::vector<std::uint8_t>* flags) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParameterError("cannot open '" + path + "'");
  return read_binary(in, flags);
}

void write_csv(std::ostream& out, const GridField& f) {
  const Lattice& lat = f.lattice();
  const int n = lat.dim();
  for (int d = 0; d < n; ++d) out << 'x' << d << ',';
  out << "mask";
  for (int c = 0; c < f.components(); ++c) out << ",v" << c;
  out << '\n' << std::setprecision(17);
  lat.for_each([&](std::size_t idx, const Index& k) {
    const Point x = lat.coord(k);
    for (int d = 0; d < n; ++d) out << x[d] << ',';
    out << static_cast<int>(lat.node_class(idx));
    for (int c = 0; c < f.components(); ++c) out << ',' << f(idx, c);
    out << '\n';
  });
}

void write_csv(const std::string& path, const GridField& f) {
  std::ofstream out(path);
  if (!out) throw ParameterError("cannot open '" + path + "' for writing");
  write_csv(out, f);
}

}  // namespace biharm
