import numpy as np
import pytest

from embryo_align.errors import MaskValueError, ParseError, TruncationError
from embryo_align.nrrd_io import read_volume, write_volume
from embryo_align.volume import Mask3D, Volume3D


def write_raw(path, header_lines, payload):
    with open(path, "wb") as f:
        f.write("\n".join(header_lines).encode("ascii"))
        f.write(b"\n\n")
        f.write(payload)


def header_for(sizes, kind="uint8"):
    return [
        "NRRD0004",
        f"type: {kind}",
        "dimension: 3",
        f"sizes: {sizes[0]} {sizes[1]} {sizes[2]}",
        "space directions: (1.0,0,0) (0,1.0,0) (0,0,1.0)",
        "endian: little",
        "encoding: raw",
    ]


class TestRoundTrip:
    def test_volume_bits(self, tmp_path):
        rng = np.random.default_rng(0)
        vol = Volume3D(rng.random((5, 6, 7)).astype(np.float32),
                       (0.5, 0.75, 1.25))
        path = tmp_path / "vol.nrrd"
        write_volume(path, vol)
        back = read_volume(path)
        assert isinstance(back, Volume3D)
        assert back.dims == vol.dims
        assert back.spacing == vol.spacing
        assert back.data.tobytes() == vol.data.tobytes()

    def test_mask_bits(self, tmp_path):
        rng = np.random.default_rng(1)
        mask = Mask3D((rng.random((4, 3, 5)) < 0.5).astype(np.uint8),
                      (1.0, 1.0, 2.0))
        path = tmp_path / "mask.nrrd"
        write_volume(path, mask)
        back = read_volume(path)
        assert isinstance(back, Mask3D)
        assert back.spacing == mask.spacing
        assert back.data.tobytes() == mask.data.tobytes()

    def test_rewrite_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(2)
        vol = Volume3D(rng.random((3, 3, 3)).astype(np.float32), (1, 1, 1))
        p1, p2 = tmp_path / "a.nrrd", tmp_path / "b.nrrd"
        write_volume(p1, vol)
        write_volume(p2, read_volume(p1))
        assert p1.read_bytes() == p2.read_bytes()


class TestMalformed:
    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "short.nrrd"
        write_raw(path, header_for((4, 4, 4)), bytes(63))
        with pytest.raises(TruncationError):
            read_volume(path)

    def test_oversized_payload(self, tmp_path):
        path = tmp_path / "long.nrrd"
        write_raw(path, header_for((4, 4, 4)), bytes(65))
        with pytest.raises(TruncationError):
            read_volume(path)

    def test_mask_value_two(self, tmp_path):
        path = tmp_path / "bad_mask.nrrd"
        payload = bytearray(8)
        payload[3] = 2
        write_raw(path, header_for((2, 2, 2)), bytes(payload))
        with pytest.raises(MaskValueError):
            read_volume(path)

    def test_unknown_field_named_in_error(self, tmp_path):
        path = tmp_path / "extra.nrrd"
        lines = header_for((2, 2, 2))
        lines.insert(5, "space origin: (0,0,0)")
        write_raw(path, lines, bytes(8))
        with pytest.raises(ParseError, match="space origin"):
            read_volume(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "magic.nrrd"
        lines = header_for((2, 2, 2))
        lines[0] = "NRRD0005"
        write_raw(path, lines, bytes(8))
        with pytest.raises(ParseError):
            read_volume(path)

    def test_fields_out_of_order(self, tmp_path):
        path = tmp_path / "order.nrrd"
        lines = header_for((2, 2, 2))
        lines[1], lines[2] = lines[2], lines[1]
        write_raw(path, lines, bytes(8))
        with pytest.raises(ParseError):
            read_volume(path)

    def test_bad_type(self, tmp_path):
        path = tmp_path / "type.nrrd"
        lines = header_for((2, 2, 2), kind="int16")
        write_raw(path, lines, bytes(16))
        with pytest.raises(ParseError):
            read_volume(path)

    def test_missing_field(self, tmp_path):
        path = tmp_path / "missing.nrrd"
        lines = header_for((2, 2, 2))
        del lines[5]
        write_raw(path, lines, bytes(8))
        with pytest.raises(ParseError):
            read_volume(path)

    def test_nonfinite_intensity(self, tmp_path):
        path = tmp_path / "nan.nrrd"
        payload = np.full(8, np.nan, dtype="<f4").tobytes()
        write_raw(path, header_for((2, 2, 2), kind="float"), payload)
        with pytest.raises(ParseError):
            read_volume(path)

    def test_axis0_fastest_in_file(self, tmp_path):
        # Payload order contract: axis0 varies fastest on disk.
        data = np.zeros((2, 2, 2), dtype=np.float32)
        data[1, 0, 0] = 3.0
        vol = Volume3D(data, (1, 1, 1))
        path = tmp_path / "order2.nrrd"
        write_volume(path, vol)
        payload = path.read_bytes().split(b"\n\n", 1)[1]
        flat = np.frombuffer(payload, dtype="<f4")
        assert flat[1] == 3.0
