"""Best-first region coverer producing normalized, deterministic cell sets."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

from flamekit.cells import kernel as K
from flamekit.cells.core import MAX_LEVEL, CellId
from flamekit.cells.regions import Region

# derivative of the minimum-width metric for the quadratic projection
_MIN_WIDTH_DERIV = 2 * math.sqrt(2) / 3


def _min_width_max_level(value: float) -> int:
    """Deepest level at which cells are still at least `value` radians wide."""
    if value <= 0:
        return MAX_LEVEL
    m, x = math.frexp(_MIN_WIDTH_DERIV / value)
    return max(0, min(MAX_LEVEL, x - 1))


@dataclass(frozen=True)
class CoveringParams:
    """Bounds for cover(): cell budget, level range, and covering mode.

    mode "exterior" covers the whole region (cells may overhang the
    boundary); "interior" returns only cells fully inside the region.
    """

    max_cells: int = 8
    min_level: int = 0
    max_level: int = MAX_LEVEL
    mode: str = "exterior"

    def __post_init__(self):
        if self.max_cells < 1:
            raise ValueError(f"max_cells must be >= 1: {self.max_cells}")
        if not 0 <= self.min_level <= MAX_LEVEL:
            raise ValueError(f"min_level out of range: {self.min_level}")
        if not 0 <= self.max_level <= MAX_LEVEL:
            raise ValueError(f"max_level out of range: {self.max_level}")
        if self.min_level > self.max_level:
            raise ValueError("min_level must not exceed max_level")
        if self.mode not in ("interior", "exterior"):
            raise ValueError(f"mode must be interior or exterior: {self.mode}")


class _Candidate:
    __slots__ = ("cell_id", "is_terminal", "children")

    def __init__(self, cell_id: int, is_terminal: bool):
        self.cell_id = cell_id
        self.is_terminal = is_terminal
        self.children: list[_Candidate] = []


class _Coverer:
    def __init__(self, region: Region, params: CoveringParams):
        self.region = region
        self.params = params
        self.interior = params.mode == "interior"
        self.result: list[int] = []
        self.pq: list[tuple[int, int, _Candidate]] = []

    def _new_candidate(self, cell_id: int) -> _Candidate | None:
        if not self.region.may_intersect_cell(cell_id):
            return None
        is_terminal = False
        level = K.level_of(cell_id)
        if level >= self.params.min_level:
            if self.interior:
                if self.region.contains_cell(cell_id):
                    is_terminal = True
                elif level + 1 > self.params.max_level:
                    return None
            else:
                if level + 1 > self.params.max_level or \
                        self.region.contains_cell(cell_id):
                    is_terminal = True
        return _Candidate(cell_id, is_terminal)

    def _add_candidate(self, candidate: _Candidate | None):
        if candidate is None:
            return
        if candidate.is_terminal:
            self.result.append(candidate.cell_id)
            return

        num_terminals = 0
        for k in range(4):
            child = self._new_candidate(K.child_at(candidate.cell_id, k))
            if child is not None:
                candidate.children.append(child)
                if child.is_terminal:
                    num_terminals += 1

        if not candidate.children:
            return
        if (not self.interior and num_terminals == 4 and
                K.level_of(candidate.cell_id) >= self.params.min_level):
            candidate.is_terminal = True
            candidate.children = []
            self._add_candidate(candidate)
            return

        # prefer big cells, then few children, then few terminal children
        priority = (((K.level_of(candidate.cell_id) << 2) +
                     len(candidate.children)) << 2) + num_terminals
        heapq.heappush(self.pq, (priority, candidate.cell_id, candidate))

    def _initial_candidates(self):
        if self.params.max_cells >= 4:
            ax, ay, az, height = self.region.cap_bound()
            angle = 2 * math.asin(math.sqrt(0.5 * min(height, 2.0))) \
                if height >= 0 else -1.0
            level = min(_min_width_max_level(2 * angle),
                        self.params.max_level, MAX_LEVEL - 1)
            if level > 0:
                center = K.leaf_from_xyz(ax, ay, az)
                for nbr in K.vertex_neighbors(center, level):
                    self._add_candidate(self._new_candidate(nbr))
                return
        for face in range(6):
            face_cell = (face << K.POS_BITS) | (1 << (K.POS_BITS - 1))
            self._add_candidate(self._new_candidate(face_cell))

    def run(self) -> list[int]:
        self._initial_candidates()
        while self.pq and (not self.interior or
                           len(self.result) < self.params.max_cells):
            _, _, candidate = heapq.heappop(self.pq)
            result_size = 0 if self.interior else len(self.pq)
            if (K.level_of(candidate.cell_id) < self.params.min_level or
                    len(candidate.children) == 1 or
                    len(self.result) + result_size + len(candidate.children)
                    <= self.params.max_cells):
                for child in candidate.children:
                    self._add_candidate(child)
            elif not self.interior:
                candidate.is_terminal = True
                candidate.children = []
                self._add_candidate(candidate)
        return self.result


def normalize_ids(ids: list[int]) -> list[int]:
    """Sort, drop cells covered by others, and merge complete sibling sets."""
    ids = sorted(ids)
    output: list[int] = []
    for cell_id in ids:
        if output and K.contains_id(output[-1], cell_id):
            continue
        while output and K.contains_id(cell_id, output[-1]):
            output.pop()
        while len(output) >= 3:
            if output[-3] ^ output[-2] ^ output[-1] != cell_id:
                break
            mask = K.lsb_of(cell_id) << 1
            mask = ~(mask + (mask << 1))
            id_masked = cell_id & mask
            if ((output[-3] & mask) != id_masked or
                    (output[-2] & mask) != id_masked or
                    (output[-1] & mask) != id_masked or
                    K.is_face(cell_id)):
                break
            output.pop()
            output.pop()
            output.pop()
            cell_id = K.parent_at(cell_id, K.level_of(cell_id) - 1)
        output.append(cell_id)
    return output


def _denormalize_ids(ids: list[int], min_level: int) -> list[int]:
    out: list[int] = []
    for cell_id in ids:
        level = K.level_of(cell_id)
        if level >= min_level:
            out.append(cell_id)
            continue
        # expand to the first permitted level, preserving curve order
        stack = [cell_id]
        expanded: list[int] = []
        while stack:
            top = stack.pop()
            if K.level_of(top) >= min_level:
                expanded.append(top)
            else:
                for k in range(3, -1, -1):
                    stack.append(K.child_at(top, k))
        out.extend(expanded)
    return out


def cover(region: Region, params: CoveringParams | None = None) -> list[CellId]:
    """Cover `region` with at most params.max_cells cells (best effort).

    Exterior coverings always cover the full region; the budget is met except
    when min_level forces more cells. Interior coverings never cross the
    boundary and may be empty when the region is smaller than the smallest
    permitted cell. The result is normalized and sorted, so identical inputs
    give identical output.
    """
    if params is None:
        params = CoveringParams()
    raw = _Coverer(region, params).run()
    ids = normalize_ids(raw)
    ids = _denormalize_ids(ids, params.min_level)
    return [CellId(i) for i in ids]
