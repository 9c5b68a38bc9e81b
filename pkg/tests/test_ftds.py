import os
import tempfile
import unittest

import numpy as np

from data.capture import Dataset
from data.ftds import HEADER, DatasetFormatError, read_dataset, record_dtype, write_dataset


def random_dataset(n: int, width: int = 16, height: int = 16) -> Dataset:
    rng = np.random.default_rng(n)
    return Dataset(
        pixels=rng.integers(0, 256, (n, height, width, 3), dtype=np.uint8),
        labels=rng.integers(0, 3, n).astype(np.uint8),
        domain_ids=rng.integers(1, 22, n).astype(np.uint16),
        pose_meta=rng.normal(size=(n, 3)).astype(np.float32),
    )


class TestFtds(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmpdir.name, "train.ftds")

    def tearDown(self):
        self.tmpdir.cleanup()

    def _write_bytes(self, data: bytes) -> None:
        with open(self.path, "wb") as f:
            f.write(data)

    def _read_bytes(self) -> bytes:
        with open(self.path, "rb") as f:
            return f.read()

    def test_write_then_read_preserves_every_column(self):
        for n, width, height in ((0, 16, 16), (1, 16, 24), (25, 32, 32)):
            with self.subTest(n=n, width=width, height=height):
                # Given
                ds = random_dataset(n, width, height)

                # When
                write_dataset(ds, self.path)
                back = read_dataset(self.path)

                # Then
                self.assertEqual(back, ds)
                self.assertEqual((back.width, back.height), (width, height))
                expected_size = HEADER.itemsize + n * record_dtype(width, height, 3).itemsize
                self.assertEqual(os.path.getsize(self.path), expected_size)

    def test_header_layout(self):
        write_dataset(random_dataset(2, 20, 18), self.path)
        data = self._read_bytes()
        self.assertEqual(data[:4], b"FTDS")
        self.assertEqual(int.from_bytes(data[4:8], "little"), 1)
        self.assertEqual(int.from_bytes(data[8:16], "little"), 2)
        self.assertEqual(int.from_bytes(data[16:18], "little"), 20)
        self.assertEqual(int.from_bytes(data[18:20], "little"), 18)
        self.assertEqual(data[20], 3)

    def test_bad_magic_reported_at_offset_zero(self):
        write_dataset(random_dataset(2), self.path)
        self._write_bytes(b"XTDS" + self._read_bytes()[4:])
        with self.assertRaises(DatasetFormatError) as ctx:
            read_dataset(self.path)
        self.assertEqual(ctx.exception.offset, 0)

    def test_unsupported_version(self):
        write_dataset(random_dataset(2), self.path)
        data = bytearray(self._read_bytes())
        data[4] = 7
        self._write_bytes(bytes(data))
        with self.assertRaises(DatasetFormatError) as ctx:
            read_dataset(self.path)
        self.assertEqual(ctx.exception.offset, 4)

    def test_truncation_reports_end_of_last_complete_record(self):
        # Given
        write_dataset(random_dataset(3), self.path)
        record = record_dtype(16, 16, 3).itemsize
        self._write_bytes(self._read_bytes()[: HEADER.itemsize + 2 * record + 5])

        # When
        with self.assertRaises(DatasetFormatError) as ctx:
            read_dataset(self.path)

        # Then
        self.assertEqual(ctx.exception.offset, HEADER.itemsize + 2 * record)

    def test_truncated_header(self):
        self._write_bytes(b"FTDS\x01\x00")
        with self.assertRaises(DatasetFormatError):
            read_dataset(self.path)

    def test_trailing_bytes_rejected(self):
        write_dataset(random_dataset(2), self.path)
        self._write_bytes(self._read_bytes() + b"\x00")
        with self.assertRaises(DatasetFormatError):
            read_dataset(self.path)

    def test_invalid_label_rejected(self):
        # Given: second record gets label 3
        write_dataset(random_dataset(2), self.path)
        data = bytearray(self._read_bytes())
        record = record_dtype(16, 16, 3).itemsize
        data[HEADER.itemsize + record] = 3
        self._write_bytes(bytes(data))

        # When
        with self.assertRaises(DatasetFormatError) as ctx:
            read_dataset(self.path)

        # Then
        self.assertEqual(ctx.exception.offset, HEADER.itemsize + record)

    def test_format_error_is_a_value_error(self):
        self.assertTrue(issubclass(DatasetFormatError, ValueError))


if __name__ == "__main__":
    unittest.main()
