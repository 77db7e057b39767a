#include "qsmfg/io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace qsmfg {

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

double parse_double(const std::string& s) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("bad number '" + s + "'");
    return v;
}

void write_vec(std::ostream& os, const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) os << format_double(v[i]) << ',';
}

std::uint64_t to_le(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
        return r;
    }
    return v;
}

} // namespace

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return {buf, res.ptr};
}

void write_csv(std::ostream& os, const GridField& f) {
    const Grid& g = f.grid();
    os << (g.dim() == 1 ? "i0,value\n" : "i0,i1,value\n");
    for (std::size_t k = 0; k < g.size(); ++k) {
        const auto idx = g.multi_index(k);
        os << idx[0] << ',';
        if (g.dim() == 2) os << idx[1] << ',';
        os << format_double(f[k]) << '\n';
    }
}

GridField read_grid_field_csv(std::istream& is, const Grid& grid) {
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("grid field csv: empty input");
    std::vector<double> values(grid.size(), 0.0);
    std::vector<char> seen(grid.size(), 0);
    const std::size_t cols = static_cast<std::size_t>(grid.dim()) + 1;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != cols) throw std::invalid_argument("grid field csv: expected " + std::to_string(cols) + " columns");
        const int i0 = std::stoi(cells[0]);
        const int i1 = grid.dim() == 2 ? std::stoi(cells[1]) : 0;
        if (i0 < 0 || i0 >= grid.n() || i1 < 0 || i1 >= grid.n()) throw std::invalid_argument("grid field csv: index out of range");
        const std::size_t k = grid.flat(i0, i1);
        values[k] = parse_double(cells.back());
        seen[k] = 1;
    }
    for (char s : seen)
        if (!s) throw std::invalid_argument("grid field csv: missing nodes");
    return GridField(grid, std::move(values));
}

nlohmann::json to_json(const GridField& f) { return nlohmann::json(f.data()); }

GridField grid_field_from_json(const nlohmann::json& j, const Grid& grid) {
    return GridField(grid, j.get<std::vector<double>>());
}

void write_csv(std::ostream& os, const JointMeasure& mu) {
    const int dx = mu.state_dim();
    const int da = mu.control_dim();
    for (int i = 0; i < dx; ++i) os << 'x' << i << ',';
    for (int i = 0; i < da; ++i) os << 'a' << i << ',';
    os << "weight\n";
    for (const Atom& at : mu.atoms()) {
        write_vec(os, at.x);
        write_vec(os, at.a);
        os << format_double(at.w) << '\n';
    }
}

void write_csv(std::ostream& os, const FpTrajectory& traj) {
    os << "t,node,value\n";
    for (std::size_t j = 0; j < traj.densities.size(); ++j) {
        const std::string t = format_double(traj.times[j]);
        const DensityField& m = traj.densities[j];
        for (std::size_t k = 0; k < m.size(); ++k) os << t << ',' << k << ',' << format_double(m[k]) << '\n';
    }
}

void write_binary(std::ostream& os, const FpTrajectory& traj) {
    if (traj.densities.empty()) throw std::invalid_argument("fp binary: empty trajectory");
    const Grid& g = traj.densities.front().grid();
    const nlohmann::json header = {{"grid", {{"dim", g.dim()}, {"n", g.n()}}},
                                   {"dt", traj.dt},
                                   {"T", traj.horizon},
                                   {"slices", traj.densities.size()},
                                   {"dtype", "float64-le"}};
    os << header.dump() << '\n';
    for (const auto& m : traj.densities)
        for (double v : m.field().data()) {
            const std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(v));
            os.write(reinterpret_cast<const char*>(&bits), sizeof bits);
        }
}

FpTrajectory read_fp_binary(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("fp binary: missing header");
    const auto header = nlohmann::json::parse(line);
    const Grid g(header.at("grid").at("dim").get<int>(), header.at("grid").at("n").get<int>());
    FpTrajectory traj;
    traj.dt = header.at("dt").get<double>();
    traj.horizon = header.at("T").get<double>();
    const auto slices = header.at("slices").get<std::size_t>();
    for (std::size_t j = 0; j < slices; ++j) {
        std::vector<double> v(g.size());
        for (double& x : v) {
            std::uint64_t bits = 0;
            if (!is.read(reinterpret_cast<char*>(&bits), sizeof bits)) throw std::invalid_argument("fp binary: truncated data");
            x = std::bit_cast<double>(to_le(bits));
        }
        traj.times.push_back(static_cast<double>(j) * traj.dt);
        traj.densities.emplace_back(GridField(g, std::move(v)));
    }
    return traj;
}

void write_csv(std::ostream& os, const std::vector<OuterRecord>& log) {
    os << "iteration,error,du_error,m_error,mu_error\n";
    for (const auto& r : log)
        os << r.iteration << ',' << format_double(r.error) << ',' << format_double(r.du_error) << ','
           << format_double(r.m_error) << ',' << format_double(r.mu_error) << '\n';
}

} // namespace qsmfg
