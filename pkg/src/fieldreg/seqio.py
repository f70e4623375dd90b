"""File formats: field templates, sequences, estimates, covariance banks, reports.

Sequences and estimates are line-delimited JSON with a one-line versioned
header; templates, banks and metric reports are single JSON documents.  Files
carry raw template keypoint ids; reading translates them to canonical
indices against the template, writing translates back.  The full schemas
live in docs/file_formats.md with golden examples under tests/data.
"""

import json
from dataclasses import dataclass

import numpy as np

from .calibration import CovarianceBank, TrainingRecord
from .errors import FormatError, SingularMatrix, UnknownKeypointId
from .field import FieldTemplate, ImageDims
from .geometry import normalize_homography
from .keypoint_filter import MeasurementFrame
from .motion import AffineSimilarity

SEQUENCE_KIND = "sequence"
ESTIMATES_KIND = "homography_estimates"
TEMPLATE_KIND = "field_template"
BANK_KIND = "covariance_bank"
REPORT_KIND = "metrics_report"
FORMAT_VERSION = 1

# Recorded in every bank file so a reader never has to guess the layout.
H_PARAM_ORDER_TAG = "column-stacked: h11 h21 h31 h12 h22 h32 h13 h23 (h33 fixed at 1, excluded)"


def _matrix(rows):
    return [[float(x) for x in row] for row in np.asarray(rows, dtype=float)]


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid JSON: {e}", path=path) from None


def _expect_kind(doc, kind, path):
    if not isinstance(doc, dict) or doc.get("kind") != kind:
        raise FormatError(f"expected a {kind!r} document", path=path)
    if doc.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported version {doc.get('version')!r}", path=path)


# -- field templates ---------------------------------------------------------


def write_template(template, path):
    doc = {
        "kind": TEMPLATE_KIND,
        "version": FORMAT_VERSION,
        "width_m": float(template.width_m),
        "height_m": float(template.height_m),
        "keypoints": [[int(i), float(x), float(y)]
                      for i, (x, y) in zip(template.ids, template.positions)],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def read_template(path):
    doc = _load_json(path)
    _expect_kind(doc, TEMPLATE_KIND, path)
    try:
        kps = doc["keypoints"]
        ids = [int(k[0]) for k in kps]
        pos = [[float(k[1]), float(k[2])] for k in kps]
        return FieldTemplate(ids=np.array(ids), positions=np.array(pos),
                             width_m=float(doc["width_m"]), height_m=float(doc["height_m"]))
    except (KeyError, IndexError, TypeError, ValueError) as e:
        raise FormatError(f"bad template document: {e}", path=path) from None


# -- sequences ---------------------------------------------------------------


@dataclass(frozen=True)
class SequenceHeader:
    sequence_id: str
    dims: ImageDims


@dataclass(frozen=True)
class SequenceFrame:
    """One frame of an input sequence, ids already canonical."""

    frame_index: int
    measurements: MeasurementFrame
    motion: AffineSimilarity = None
    flow: tuple = None              # (prev (M,2), curr (M,2)) or None
    gt_homography: np.ndarray = None
    gt_ids: np.ndarray = None
    gt_positions: np.ndarray = None


def _id_pos_list(ids, positions, template):
    raw = template.ids[np.asarray(ids, dtype=int)]
    return [[int(i), float(p[0]), float(p[1])] for i, p in zip(raw, np.atleast_2d(positions))]


def write_sequence(path, header, frames, template):
    """frames: iterable of SequenceFrame or simulator SimFrame (same fields)."""
    with open(path, "w", encoding="utf-8") as f:
        head = {
            "kind": SEQUENCE_KIND,
            "version": FORMAT_VERSION,
            "sequence_id": header.sequence_id,
            "width_px": int(header.dims.width_px),
            "height_px": int(header.dims.height_px),
        }
        f.write(json.dumps(head) + "\n")
        for fr in frames:
            row = {
                "frame": int(fr.frame_index),
                "measurements": _id_pos_list(fr.measurements.ids, fr.measurements.positions,
                                             template),
            }
            if fr.motion is not None:
                row["motion"] = [float(v) for v in fr.motion.params()]
            flow = getattr(fr, "flow", None)
            if flow is not None:
                prev, curr = flow
                row["flow"] = [[float(a), float(b), float(c), float(d)]
                               for (a, b), (c, d) in zip(np.atleast_2d(prev), np.atleast_2d(curr))]
            if fr.gt_homography is not None:
                row["gt_homography"] = _matrix(fr.gt_homography)
            if fr.gt_ids is not None:
                row["gt_keypoints"] = _id_pos_list(fr.gt_ids, fr.gt_positions, template)
            f.write(json.dumps(row) + "\n")


def _parse_id_pos(entries, template, path, line):
    try:
        raw_ids = [int(e[0]) for e in entries]
        pos = np.array([[float(e[1]), float(e[2])] for e in entries]).reshape(-1, 2)
    except (IndexError, TypeError, ValueError) as e:
        raise FormatError(f"bad [id, x, y] entry: {e}", path=path, line=line) from None
    try:
        idx = template.index_of(raw_ids)
    except UnknownKeypointId as e:
        raise UnknownKeypointId(f"{path}: line {line}: {e}") from None
    return idx, pos


def iter_sequence(path, template):
    """Yield SequenceHeader first, then SequenceFrame per line, streaming."""
    with open(path, "r", encoding="utf-8") as f:
        header = None
        last_frame = None
        for lineno, raw in enumerate(f, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                row = json.loads(raw)
            except json.JSONDecodeError as e:
                raise FormatError(f"invalid JSON: {e}", path=path, line=lineno) from None
            if header is None:
                _expect_kind(row, SEQUENCE_KIND, path)
                try:
                    header = SequenceHeader(
                        sequence_id=str(row["sequence_id"]),
                        dims=ImageDims(int(row["width_px"]), int(row["height_px"])))
                except (KeyError, TypeError, ValueError) as e:
                    raise FormatError(f"bad sequence header: {e}", path=path, line=lineno) from None
                yield header
                continue
            try:
                idx = int(row["frame"])
            except (KeyError, TypeError, ValueError):
                raise FormatError("frame row needs an integer 'frame'", path=path, line=lineno) from None
            if last_frame is not None and idx <= last_frame:
                raise FormatError(f"frame indices must strictly increase "
                                  f"({idx} after {last_frame})", path=path, line=lineno)
            last_frame = idx

            m_idx, m_pos = _parse_id_pos(row.get("measurements", []), template, path, lineno)
            motion = None
            if "motion" in row:
                p = row["motion"]
                if not isinstance(p, list) or len(p) != 4:
                    raise FormatError("motion must be [a, b, tx, ty]", path=path, line=lineno)
                motion = AffineSimilarity(*[float(v) for v in p])
            flow = None
            if "flow" in row:
                try:
                    arr = np.array(row["flow"], dtype=float).reshape(-1, 4)
                except ValueError as e:
                    raise FormatError(f"bad flow rows: {e}", path=path, line=lineno) from None
                flow = (arr[:, :2].copy(), arr[:, 2:].copy())
            gt_h = None
            if "gt_homography" in row:
                try:
                    gt_h = normalize_homography(np.array(row["gt_homography"], dtype=float).reshape(3, 3))
                except (ValueError, SingularMatrix) as e:
                    raise FormatError(f"bad gt_homography: {e}", path=path, line=lineno) from None
            gt_idx = gt_pos = None
            if "gt_keypoints" in row:
                gt_idx, gt_pos = _parse_id_pos(row["gt_keypoints"], template, path, lineno)
            yield SequenceFrame(
                frame_index=idx,
                measurements=MeasurementFrame(idx, m_idx, m_pos),
                motion=motion,
                flow=flow,
                gt_homography=gt_h,
                gt_ids=gt_idx,
                gt_positions=gt_pos,
            )
        if header is None:
            raise FormatError("empty sequence file", path=path)


def read_sequence(path, template):
    """(SequenceHeader, list of SequenceFrame)."""
    it = iter_sequence(path, template)
    header = next(it)
    return header, list(it)


def training_records(frames):
    """TrainingRecords from sequence frames that carry a ground-truth homography."""
    out = []
    for fr in frames:
        if fr.gt_homography is None:
            continue
        gt_ids = fr.gt_ids if fr.gt_ids is not None else np.empty(0, dtype=int)
        gt_pos = fr.gt_positions if fr.gt_positions is not None else np.empty((0, 2))
        out.append(TrainingRecord(
            frame_index=fr.frame_index,
            gt_homography=fr.gt_homography,
            gt_ids=gt_ids,
            gt_positions=gt_pos,
            measured_ids=fr.measurements.ids,
            measured_positions=fr.measurements.positions,
            motion=fr.motion,
        ))
    return out


# -- estimates ---------------------------------------------------------------


def write_estimates(path, header, estimates, template):
    with open(path, "w", encoding="utf-8") as f:
        head = {
            "kind": ESTIMATES_KIND,
            "version": FORMAT_VERSION,
            "sequence_id": header.sequence_id,
            "width_px": int(header.dims.width_px),
            "height_px": int(header.dims.height_px),
        }
        f.write(json.dumps(head) + "\n")
        for est in estimates:
            row = {"frame": int(est.frame_index)}
            row["homography"] = None if est.homography is None else _matrix(est.homography)
            row["keypoints"] = _id_pos_list(est.keypoint_ids, est.keypoint_positions, template)
            row["flags"] = list(est.flags)
            f.write(json.dumps(row) + "\n")


def read_estimates(path, template):
    """(SequenceHeader, list of FrameEstimate-shaped rows)."""
    from .pipeline import FrameEstimate  # local import to avoid a cycle

    with open(path, "r", encoding="utf-8") as f:
        header = None
        out = []
        last_frame = None
        for lineno, raw in enumerate(f, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                row = json.loads(raw)
            except json.JSONDecodeError as e:
                raise FormatError(f"invalid JSON: {e}", path=path, line=lineno) from None
            if header is None:
                _expect_kind(row, ESTIMATES_KIND, path)
                header = SequenceHeader(
                    sequence_id=str(row["sequence_id"]),
                    dims=ImageDims(int(row["width_px"]), int(row["height_px"])))
                continue
            try:
                idx = int(row["frame"])
            except (KeyError, TypeError, ValueError):
                raise FormatError("frame row needs an integer 'frame'", path=path, line=lineno) from None
            if last_frame is not None and idx <= last_frame:
                raise FormatError("frame indices must strictly increase", path=path, line=lineno)
            last_frame = idx
            H = row.get("homography")
            if H is not None:
                H = np.array(H, dtype=float).reshape(3, 3)
            k_idx, k_pos = _parse_id_pos(row.get("keypoints", []), template, path, lineno)
            out.append(FrameEstimate(
                frame_index=idx, homography=H, keypoint_ids=k_idx,
                keypoint_positions=k_pos, flags=tuple(row.get("flags", []))))
        if header is None:
            raise FormatError("empty estimates file", path=path)
    return header, out


# -- covariance banks --------------------------------------------------------


def write_bank(bank, path):
    def per_id(blocks, counts):
        keys = sorted(blocks.keys())
        return {
            "per_id": {str(k): _matrix(blocks[k]) for k in keys},
            "counts": {str(k): int(counts.get(k, 0)) for k in keys},
        }

    doc = {
        "kind": BANK_KIND,
        "version": FORMAT_VERSION,
        "homography_param_order": H_PARAM_ORDER_TAG,
        "matrix_layout": "row-major",
        "keypoint_process": {
            "pooled": _matrix(bank.keypoint_process_pooled),
            **per_id(bank.keypoint_process, bank.keypoint_process_counts),
        },
        "measurement": {
            "pooled": _matrix(bank.measurement_pooled),
            **per_id(bank.measurement, bank.measurement_counts),
        },
        "homography_process": _matrix(bank.homography_process),
        "init_homography": _matrix(bank.init_homography),
        "samples": {
            "homography_process": int(bank.homography_process_samples),
            "init_homography": int(bank.init_homography_samples),
        },
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def read_bank(path):
    doc = _load_json(path)
    _expect_kind(doc, BANK_KIND, path)
    if doc.get("homography_param_order") != H_PARAM_ORDER_TAG:
        raise FormatError(
            f"unknown homography parameter order {doc.get('homography_param_order')!r}", path=path)
    try:
        def section(name, k):
            sec = doc[name]
            pooled = np.array(sec["pooled"], dtype=float).reshape(k, k)
            blocks = {int(i): np.array(m, dtype=float).reshape(k, k)
                      for i, m in sec.get("per_id", {}).items()}
            counts = {int(i): int(c) for i, c in sec.get("counts", {}).items()}
            return blocks, pooled, counts

        kp_blocks, kp_pooled, kp_counts = section("keypoint_process", 2)
        m_blocks, m_pooled, m_counts = section("measurement", 2)
        samples = doc.get("samples", {})
        return CovarianceBank(
            keypoint_process=kp_blocks,
            keypoint_process_pooled=kp_pooled,
            keypoint_process_counts=kp_counts,
            measurement=m_blocks,
            measurement_pooled=m_pooled,
            measurement_counts=m_counts,
            homography_process=np.array(doc["homography_process"], dtype=float).reshape(8, 8),
            homography_process_samples=int(samples.get("homography_process", 0)),
            init_homography=np.array(doc["init_homography"], dtype=float).reshape(8, 8),
            init_homography_samples=int(samples.get("init_homography", 0)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"bad covariance bank: {e}", path=path) from None


# -- metric reports ----------------------------------------------------------


def write_report(report, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.as_document(), f, indent=1)
        f.write("\n")


def read_report(path):
    doc = _load_json(path)
    _expect_kind(doc, REPORT_KIND, path)
    return doc
