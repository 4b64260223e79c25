"""Static SVG pictures of plans (traces, links, goals) and first-stage node sets."""
from __future__ import annotations

from xml.sax.saxutils import quoteattr

from .plan import Plan, goal_visit_times, GoalOrderError

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
PIXEL_BUDGET = 4_000_000
DEFAULT_SNAPSHOTS = 8


class RenderError(ValueError):
    pass


def color(agent: int) -> str:
    return PALETTE[agent % len(PALETTE)]


class _Canvas:
    def __init__(self, scenario, cell):
        xs, ys = scenario.graph.coords[:, 0], scenario.graph.coords[:, 1]
        if scenario.grid is not None:
            self.w, self.h = scenario.grid.width, scenario.grid.height
        else:
            self.w, self.h = int(xs.max()) + 1, int(ys.max()) + 1
        self.cell = cell
        if self.w * cell * self.h * cell > PIXEL_BUDGET:
            raise RenderError(f"image of {self.w * cell}x{self.h * cell} px exceeds the pixel budget")
        self.parts = []
        self.scenario = scenario

    def xy(self, v):
        x, y = self.scenario.graph.coords[v]
        return (x + 0.5) * self.cell, (y + 0.5) * self.cell

    def add(self, s):
        self.parts.append(s)

    def background(self):
        c = self.cell
        self.add(f'<rect x="0" y="0" width="{self.w * c}" height="{self.h * c}" fill="#ffffff"/>')
        grid = self.scenario.grid
        if grid is not None:
            for r in range(grid.height):
                for col in range(grid.width):
                    if not grid.passable[r, col]:
                        self.add(f'<rect class="obstacle" x="{col * c}" y="{r * c}" '
                                 f'width="{c}" height="{c}" fill="#333333"/>')

    def goals(self):
        r = self.cell * 0.35
        for j, g in enumerate(self.scenario.goals):
            x, y = self.xy(g)
            self.add(f'<circle class="goal" cx="{x:.2f}" cy="{y:.2f}" r="{r:.2f}" '
                     f'fill="none" stroke="#000000" stroke-width="2"/>')
            self.add(f'<text x="{x:.2f}" y="{y - r - 2:.2f}" font-size="{self.cell * 0.6:.1f}" '
                     f'text-anchor="middle">{j}</text>')

    def scale_bar(self):
        lam = self.scenario.comm.limit
        length = min(lam, self.w) * self.cell
        y = self.h * self.cell + self.cell
        self.add(f'<line class="scale-bar" x1="{self.cell / 2:.2f}" y1="{y:.2f}" '
                 f'x2="{self.cell / 2 + length:.2f}" y2="{y:.2f}" stroke="#000000" stroke-width="3"/>')
        self.add(f'<text x="{self.cell / 2:.2f}" y="{y + self.cell:.2f}" '
                 f'font-size="{self.cell * 0.7:.1f}">range {lam:g}</text>')

    def svg(self):
        W, H = self.w * self.cell, (self.h + 2) * self.cell
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
                f'viewBox="0 0 {W} {H}">')
        return "\n".join([head, *self.parts, "</svg>"]) + "\n"


def _positions_at(scenario, plan: Plan, t):
    out = []
    for start, acts in zip(scenario.starts, plan.actions):
        v = start
        for a in acts:
            if a.kind == "move" and a.depart <= t + 1e-9:
                v = a.to
        out.append(v)
    return out


def snapshot_times(scenario, plan: Plan, count: int = DEFAULT_SNAPSHOTS) -> list[float]:
    """Goal-visit times plus ``count`` evenly spaced instants."""
    end = plan.end_time()
    ts = {round(end * k / max(count - 1, 1), 9) for k in range(count)} if count > 0 else set()
    try:
        ts.update(goal_visit_times(scenario, plan))
    except GoalOrderError:
        pass
    return sorted(ts)


def render_plan(scenario, plan: Plan, cell: int = 16, snapshots: int = DEFAULT_SNAPSHOTS) -> str:
    cv = _Canvas(scenario, cell)
    cv.background()
    metric, lam = scenario.comm.metric, scenario.comm.limit
    coords = scenario.graph.coords
    for t in snapshot_times(scenario, plan, snapshots):
        pos = _positions_at(scenario, plan, t)
        for i in range(len(pos)):
            for j in range(i + 1, len(pos)):
                if metric(coords[pos[i]], coords[pos[j]]) <= lam + 1e-9:
                    (x1, y1), (x2, y2) = cv.xy(pos[i]), cv.xy(pos[j])
                    cv.add(f'<line class="link" data-time="{t:g}" x1="{x1:.2f}" y1="{y1:.2f}" '
                           f'x2="{x2:.2f}" y2="{y2:.2f}" stroke="#bbbbbb" stroke-width="1.5"/>')
    for a, (start, acts) in enumerate(zip(scenario.starts, plan.actions)):
        pts = [cv.xy(start)] + [cv.xy(x.to) for x in acts if x.kind == "move"]
        path = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
        cv.add(f'<polyline class="trace" data-agent="{a}" points={quoteattr(path)} fill="none" '
               f'stroke="{color(a)}" stroke-width="2.5" stroke-linejoin="round"/>')
        x, y = pts[0]
        cv.add(f'<rect class="start" x="{x - cell * 0.3:.2f}" y="{y - cell * 0.3:.2f}" '
               f'width="{cell * 0.6:.2f}" height="{cell * 0.6:.2f}" fill="{color(a)}"/>')
    cv.goals()
    cv.scale_bar()
    return cv.svg()


def render_stage1(scenario, dump: dict, epoch: int = 0, cell: int = 16) -> str:
    """Opened, result and init node shading for one epoch of a first-stage dump."""
    eps = dump["epochs"]
    if not 0 <= epoch < len(eps):
        raise RenderError(f"dump has no epoch {epoch}")
    cv = _Canvas(scenario, cell)
    cv.background()
    lookup = scenario.vertex_by_label
    c = cell
    layers = (("opened", 0.15), ("result", 0.55), ("init", 0.9))
    for layer, opacity in layers:
        for entry in eps[epoch]["agents"]:
            a = entry["agent"]
            for x, y, _ in entry[layer]:
                v = lookup[(x, y)]
                px, py = cv.xy(v)
                cv.add(f'<rect class="{layer}" data-agent="{a}" x="{px - c / 2:.2f}" y="{py - c / 2:.2f}" '
                       f'width="{c}" height="{c}" fill="{color(a)}" fill-opacity="{opacity}"/>')
    cv.goals()
    cv.scale_bar()
    return cv.svg()
