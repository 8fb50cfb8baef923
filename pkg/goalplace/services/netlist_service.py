import logging
from pathlib import Path
from typing import Any, Optional

import numpy as np

from goalplace.core.exceptions import InputError, MatchError, ParseError
from goalplace.schemas.netlist import (
    Cell,
    CellKind,
    Floorplan,
    MatchedGeometry,
    MatchReport,
    Net,
    Netlist,
    NetlistFormat,
    Placement,
    TargetVector,
)
from goalplace.utils.jsonl import read_records, write_records

logger = logging.getLogger(__name__)

SizeTable = dict[str, tuple[float, float]]


def parse_netlist(path: Path | str, format: NetlistFormat = NetlistFormat.jsonl) -> Netlist:
    """Read a netlist file in one of the supported formats."""
    if NetlistFormat(format) == NetlistFormat.bookshelf_like:
        return _parse_bookshelf_like(Path(path))
    return _parse_jsonl(Path(path))


def _pin_list(value: Any) -> list[tuple[float, float]]:
    return [(float(dx), float(dy)) for dx, dy in value]


def _parse_jsonl(path: Path) -> Netlist:
    header: Optional[dict[str, Any]] = None
    cell_records: list[tuple[int, dict[str, Any]]] = []
    net_records: list[tuple[int, dict[str, Any]]] = []
    for lineno, record in read_records(path):
        if "floorplan" in record:
            if header is not None:
                raise ParseError(path, lineno, "second floorplan header")
            header = record
            header["_line"] = lineno
        elif "cell" in record:
            cell_records.append((lineno, record))
        elif "net" in record:
            net_records.append((lineno, record))
        else:
            raise ParseError(path, lineno, "unrecognized record (expected floorplan, cell or net)")
    if header is None:
        raise ParseError(path, 1, "missing floorplan header")

    try:
        x, y, width, height = (float(v) for v in header["floorplan"])
        site_w = float(header["site_w"])
        row_h = float(header["row_h"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(path, header["_line"], f"bad floorplan header: {exc}") from exc
    if width <= 0 or height <= 0 or site_w <= 0 or row_h <= 0:
        raise ParseError(path, header["_line"], "floorplan, site and row dimensions must be positive")

    cells: list[Cell] = []
    index: dict[str, int] = {}
    for lineno, record in cell_records:
        try:
            cell = _cell_from_record(record, len(cells), site_w, row_h)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(path, lineno, f"bad cell record: {exc}") from exc
        if cell.name in index:
            raise ParseError(path, lineno, f"duplicate cell name {cell.name}")
        index[cell.name] = cell.id
        cells.append(cell)

    nets: list[Net] = []
    for lineno, record in net_records:
        pins = []
        try:
            raw_pins = [(str(name), int(pin)) for name, pin in record["pins"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(path, lineno, f"bad net record: {exc}") from exc
        for name, pin in raw_pins:
            if name not in index:
                raise ParseError(path, lineno, f"dangling pin: net {record['net']} references unknown cell {name}")
            if not 0 <= pin < len(cells[index[name]].pin_offsets):
                raise ParseError(path, lineno, f"dangling pin: cell {name} has no pin {pin}")
            pins.append((index[name], pin))
        if not pins:
            raise ParseError(path, lineno, f"net {record['net']} has no pins")
        nets.append(Net(id=len(nets), name=str(record["net"]), pins=pins))

    return Netlist(
        cells=cells,
        nets=nets,
        floorplan=Floorplan(x=x, y=y, width=width, height=height),
        site_width=site_w,
        row_height=row_h,
    )


def _cell_from_record(record: dict[str, Any], cell_id: int, site_w: float, row_h: float) -> Cell:
    kind = CellKind(record.get("kind", CellKind.std_cell.value))
    width, height = float(record["w"]), float(record["h"])
    zero_sized = width == 0 and height == 0
    if zero_sized:
        width, height = site_w, row_h
    pins = _pin_list(record.get("pins", []))
    fields: dict[str, Any] = {
        "id": cell_id,
        "name": str(record["cell"]),
        "width": width,
        "height": height,
        "kind": kind,
        "movable": bool(record.get("movable", kind != CellKind.macro)),
        "pin_offsets": pins,
        "slack": record.get("slack"),
        "zero_sized": zero_sized,
    }
    if "w_inflated" in record:
        fields["nominal_width"] = width
        fields["nominal_pin_offsets"] = pins
        fields["width"] = float(record["w_inflated"])
        fields["pin_offsets"] = _pin_list(record.get("pins_inflated", pins))
    return Cell(**fields)


def _parse_bookshelf_like(path: Path) -> Netlist:
    """Bookshelf-flavoured single file; pin offsets are relative to the cell centre."""
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError as exc:
        raise InputError(f"file not found: {path}") from exc

    floorplan: Optional[Floorplan] = None
    site_w = row_h = None
    cells: list[dict[str, Any]] = []
    index: dict[str, int] = {}
    nets: list[Net] = []
    current_net: Optional[tuple[str, int, int]] = None  # name, expected degree, line
    net_pins: list[tuple[int, int]] = []
    section = None

    def close_net(lineno: int) -> None:
        nonlocal current_net, net_pins
        if current_net is None:
            return
        name, degree, start = current_net
        if len(net_pins) != degree:
            raise ParseError(path, start, f"net {name} declares {degree} pins, found {len(net_pins)}")
        nets.append(Net(id=len(nets), name=name, pins=net_pins))
        current_net, net_pins = None, []

    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.replace(":", " : ").split()
        key = tokens[0]
        try:
            if key == "Floorplan":
                x, y, w, h = (float(t) for t in tokens[2:6])
                floorplan = Floorplan(x=x, y=y, width=w, height=h)
            elif key == "Site":
                site_w, row_h = float(tokens[2]), float(tokens[3])
            elif key == "NumNodes":
                section = "nodes"
            elif key == "NumNets":
                section = "nets"
            elif key == "NetDegree":
                close_net(lineno)
                degree = int(tokens[2])
                name = tokens[3] if len(tokens) > 3 else str(len(nets))
                current_net = (name, degree, lineno)
            elif section == "nodes":
                name, w, h = tokens[0], float(tokens[1]), float(tokens[2])
                flags = set(tokens[3:])
                if name in index:
                    raise ParseError(path, lineno, f"duplicate cell name {name}")
                kind = CellKind.std_cell
                for candidate in (CellKind.macro, CellKind.buffer, CellKind.filler):
                    if candidate.value in flags:
                        kind = candidate
                index[name] = len(cells)
                cells.append({"name": name, "w": w, "h": h, "kind": kind,
                              "movable": "terminal" not in flags, "pins": []})
            elif section == "nets" and current_net is not None:
                name = tokens[0]
                if name not in index:
                    raise ParseError(path, lineno, f"dangling pin: net {current_net[0]} references unknown cell {name}")
                dx, dy = (float(t) for t in tokens[3:5]) if len(tokens) >= 5 else (0.0, 0.0)
                cell = cells[index[name]]
                cell["pins"].append((dx, dy))
                net_pins.append((index[name], len(cell["pins"]) - 1))
            else:
                raise ParseError(path, lineno, f"unexpected line: {line}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(path, lineno, f"malformed line: {exc}") from exc
    close_net(len(lines))

    if floorplan is None or site_w is None or row_h is None:
        raise ParseError(path, 1, "missing Floorplan or Site line")
    if floorplan.area <= 0:
        raise ParseError(path, 1, "floorplan area must be positive")

    built = []
    for cell_id, raw in enumerate(cells):
        zero_sized = raw["w"] == 0 and raw["h"] == 0
        w, h = (site_w, row_h) if zero_sized else (raw["w"], raw["h"])
        built.append(Cell(
            id=cell_id, name=raw["name"], width=w, height=h, kind=raw["kind"], movable=raw["movable"],
            pin_offsets=[(dx + w / 2, dy + h / 2) for dx, dy in raw["pins"]], zero_sized=zero_sized,
        ))
    return Netlist(cells=built, nets=nets, floorplan=floorplan, site_width=site_w, row_height=row_h)


def serialize_netlist(netlist: Netlist, path: Path | str) -> None:
    """Write ``netlist`` as JSON-lines; inflated cells keep their nominal geometry."""
    fp = netlist.floorplan
    records: list[dict[str, Any]] = [{
        "floorplan": [fp.x, fp.y, fp.width, fp.height],
        "site_w": netlist.site_width,
        "row_h": netlist.row_height,
    }]
    for cell in netlist.cells:
        record: dict[str, Any] = {
            "cell": cell.name,
            "w": 0.0 if cell.zero_sized else cell.base_width,
            "h": 0.0 if cell.zero_sized else cell.height,
            "kind": cell.kind.value,
            "movable": cell.movable,
            "pins": [list(p) for p in cell.base_pin_offsets],
        }
        if cell.slack is not None:
            record["slack"] = cell.slack
        if cell.is_inflated:
            record["w_inflated"] = cell.width
            record["pins_inflated"] = [list(p) for p in cell.pin_offsets]
        records.append(record)
    for net in netlist.nets:
        records.append({
            "net": net.name,
            "pins": [[netlist.cells[c].name, p] for c, p in net.pins],
        })
    write_records(path, records)


def read_placement(path: Path | str, frame_id: Optional[str] = None) -> Placement:
    names, xs, ys = [], [], []
    seen = set()
    for lineno, record in read_records(path):
        try:
            name, x, y = str(record["cell"]), float(record["x"]), float(record["y"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(path, lineno, f"bad placement record: {exc}") from exc
        if name in seen:
            raise ParseError(path, lineno, f"duplicate cell {name}")
        seen.add(name)
        names.append(name)
        xs.append(x)
        ys.append(y)
    return Placement(frame_id=frame_id or Path(path).stem, names=names, x=xs, y=ys)


def write_placement(placement: Placement, path: Path | str) -> None:
    write_records(path, (
        {"cell": name, "x": float(x), "y": float(y)}
        for name, x, y in zip(placement.names, placement.x, placement.y)
    ))


def read_sizes(path: Path | str) -> SizeTable:
    sizes: SizeTable = {}
    for lineno, record in read_records(path):
        try:
            name, w, h = str(record["cell"]), float(record["w"]), float(record["h"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(path, lineno, f"bad size record: {exc}") from exc
        if name in sizes:
            raise ParseError(path, lineno, f"duplicate cell {name}")
        sizes[name] = (w, h)
    return sizes


def write_sizes(sizes: SizeTable, path: Path | str) -> None:
    write_records(path, ({"cell": name, "w": w, "h": h} for name, (w, h) in sizes.items()))


def read_slacks(path: Path | str) -> dict[str, float]:
    slacks: dict[str, float] = {}
    for lineno, record in read_records(path):
        try:
            slacks[str(record["cell"])] = float(record["slack"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(path, lineno, f"bad slack record: {exc}") from exc
    return slacks


def write_slacks(slacks: dict[str, float], path: Path | str) -> None:
    write_records(path, ({"cell": name, "slack": value} for name, value in slacks.items()))


def slack_array(netlist: Netlist, slacks: Optional[dict[str, float]] = None) -> np.ndarray:
    """Per-cell slack in netlist order; NaN where no slack is known."""
    if slacks is None:
        return np.array([np.nan if c.slack is None else c.slack for c in netlist.cells], dtype=float)
    return np.array([slacks.get(name, np.nan) for name in netlist.names], dtype=float)


def serialize_targets(targets: TargetVector, path: Path | str) -> None:
    write_records(path, (
        {"cell": name, "target": float(value), "provenance": targets.provenance}
        for name, value in zip(targets.names, targets.values)
    ))


def load_targets(path: Path | str, netlist: Optional[Netlist] = None) -> TargetVector:
    """Read a target file; with ``netlist`` the names must match exactly and are put in netlist order."""
    names, values = [], []
    provenance: Optional[str] = None
    seen = set()
    for lineno, record in read_records(path):
        try:
            name, value = str(record["cell"]), float(record["target"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(path, lineno, f"bad target record: {exc}") from exc
        tag = str(record.get("provenance", "tool"))
        if provenance is None:
            provenance = tag
        elif tag != provenance:
            raise ParseError(path, lineno, f"mixed provenance {tag} and {provenance}")
        if name in seen:
            raise ParseError(path, lineno, f"duplicate cell {name}")
        seen.add(name)
        names.append(name)
        values.append(value)
    targets = TargetVector(names=names, values=values, provenance=provenance or "tool")
    if netlist is None:
        return targets

    missing = sorted(set(netlist.names) - seen)
    if missing:
        raise InputError(f"{path}: no target for {len(missing)} netlist cell(s), e.g. {missing[0]}")
    unknown = sorted(seen - set(netlist.names))
    if unknown:
        raise InputError(f"{path}: targets for {len(unknown)} cell(s) not in the netlist, e.g. {unknown[0]}")
    return TargetVector(names=netlist.names, values=targets.align(netlist.names), provenance=targets.provenance)


def match_netlists(
    place: Netlist,
    postroute: Netlist,
    postroute_positions: Placement,
    postsynth_sizes: SizeTable,
) -> MatchedGeometry:
    """Build the target geometry from a post-route result.

    Buffers are dropped, cells present in both netlists take post-route
    positions and post-synthesis sizes, post-route-only std cells become
    zero-sized at their post-route position, and place-only cells are reported
    and left out.
    """
    place_names = set(place.names)
    kept = [c for c in postroute.cells if c.kind != CellKind.buffer]
    removed_buffers = postroute.size - len(kept)
    kept_names = {c.name for c in kept}

    matched_names = [name for name in place.names if name in kept_names]
    if not matched_names:
        raise MatchError("no matched cells between the place and post-route netlists")

    cells: list[Cell] = []
    for name in matched_names:
        cell = place.cell(name)
        if name in postsynth_sizes:
            w, h = postsynth_sizes[name]
        elif cell.kind == CellKind.macro:
            w, h = cell.base_width, cell.height
        else:
            raise MatchError(f"missing post-synthesis size for matched cell {name}")
        cells.append(Cell(
            id=len(cells), name=name, width=w, height=h, kind=cell.kind,
            movable=cell.movable, slack=cell.slack,
        ))

    zeroed: list[str] = []
    for cell in sorted((c for c in kept if c.name not in place_names), key=lambda c: c.name):
        if cell.kind == CellKind.std_cell:
            zeroed.append(cell.name)
            cells.append(Cell(
                id=len(cells), name=cell.name, width=place.site_width, height=place.row_height,
                kind=CellKind.std_cell, movable=cell.movable, zero_sized=True,
            ))
        elif cell.kind == CellKind.macro:
            cells.append(Cell(
                id=len(cells), name=cell.name, width=cell.base_width, height=cell.height,
                kind=CellKind.macro, movable=cell.movable,
            ))

    names = [c.name for c in cells]
    x, y = postroute_positions.align(names)
    report = MatchReport(
        matched=[(name, name) for name in sorted(matched_names)],
        removed_buffers=removed_buffers,
        zeroed=zeroed,
        place_only=sorted(place_names - kept_names),
    )
    logger.info(
        "matched %d cells, zeroed %d, removed %d buffers, %d place-only",
        len(report.matched), len(report.zeroed), report.removed_buffers, len(report.place_only),
    )
    geometry = Netlist(
        cells=cells, nets=[], floorplan=place.floorplan,
        site_width=place.site_width, row_height=place.row_height,
    )
    placement = Placement(frame_id=f"matched:{postroute_positions.frame_id}", names=names, x=x, y=y)
    return MatchedGeometry(netlist=geometry, placement=placement, report=report)
