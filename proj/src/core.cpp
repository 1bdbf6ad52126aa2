#include "vtnav/core.hpp"

namespace vtnav {

CoveringCircles covering_circles(const SystemState& s, const SystemGeometry& g) {
    CoveringCircles out;
    const Vec2 e_psi = unit_vector(s.psi);
    const Vec2 e_zeta = unit_vector(s.zeta);
    const Vec2 xr = trailer_position(s, g);
    out.vehicle.reserve(g.vehicle_circle_offsets.size());
    for (double off : g.vehicle_circle_offsets) {
        out.vehicle.push_back(s.xf + off * e_psi);
    }
    out.trailer.reserve(g.trailer_circle_offsets.size());
    for (double off : g.trailer_circle_offsets) {
        out.trailer.push_back(xr + off * e_zeta);
    }
    return out;
}

}  // namespace vtnav
