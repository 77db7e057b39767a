#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsmfg/coupling.hpp"
#include "qsmfg/fp.hpp"
#include "qsmfg/grid.hpp"
#include "qsmfg/measure.hpp"

namespace qsmfg {

/// 17 significant digits: reads back to the same double.
std::string format_double(double v);

/// Header "i0[,i1],value"; one row per node with integer indices.
void write_csv(std::ostream& os, const GridField& f);
GridField read_grid_field_csv(std::istream& is, const Grid& grid);

nlohmann::json to_json(const GridField& f);
GridField grid_field_from_json(const nlohmann::json& j, const Grid& grid);

/// Header "x0[,x1],a0[,a1],weight".
void write_csv(std::ostream& os, const JointMeasure& mu);

/// Rows "t,node,value".
void write_csv(std::ostream& os, const FpTrajectory& traj);

/// One JSON header line (grid, dt, T, steps, count) followed by the densities
/// as little-endian 64-bit floats, slice-major.
void write_binary(std::ostream& os, const FpTrajectory& traj);
FpTrajectory read_fp_binary(std::istream& is);

/// Rows "iteration,error,du_error,m_error,mu_error".
void write_csv(std::ostream& os, const std::vector<OuterRecord>& log);

} // namespace qsmfg
