"""Tests for routing input generation"""

import numpy as np
import pytest

from app.models.experiment import PermSource
from app.models.network import NetworkConfig
from app.services.permutation_service import (
    generate_permutation,
    load_permutation,
    stress_permutation,
    uniform_permutation,
)
from app.utils.exceptions import DomainError, PermutationValidationError, ReportIOError


class TestGeneratePermutation:
    """Test permutation sources"""

    def test_uniform_is_bijection(self):
        """Test the shuffle keeps every destination once"""
        perm = uniform_permutation(1000, 12)
        assert sorted(perm.tolist()) == list(range(1000))

    def test_uniform_seeded(self):
        """Test equal seeds, equal permutations"""
        assert np.array_equal(uniform_permutation(64, 5), uniform_permutation(64, 5))
        assert not np.array_equal(uniform_permutation(64, 5), uniform_permutation(64, 6))

    def test_fixed_sources(self, pops44):
        """Test identity and reversal"""
        assert generate_permutation(PermSource.IDENTITY, pops44).tolist() == list(range(16))
        assert generate_permutation(PermSource.REVERSAL, pops44).tolist() == list(range(15, -1, -1))

    def test_stress_groups_share_temp_group(self):
        """Test consecutive sources from distinct groups target one (group, temp group) pair"""
        cfg = NetworkConfig(8, 2)
        perm = stress_permutation(cfg)
        assert sorted(perm.tolist()) == list(range(16))
        # packets 0 and 8 come from groups 0 and 1
        assert perm[0] // 8 == perm[8] // 8
        assert perm[0] % 2 == perm[8] % 2

    def test_stress_needs_d_greater_than_g(self, pops44):
        """Test d <= g is rejected"""
        with pytest.raises(DomainError):
            stress_permutation(pops44)

    def test_file_source_needs_path(self, pops44):
        """Test FILE without a path"""
        with pytest.raises(DomainError):
            generate_permutation(PermSource.FILE, pops44)


class TestLoadPermutation:
    """Test permutation files"""

    def test_json(self, tmp_path, sample_permutation):
        """Test a JSON array"""
        path = tmp_path / "perm.json"
        path.write_text(str(sample_permutation.tolist()))
        assert load_permutation(path, 16).tolist() == sample_permutation.tolist()

    def test_whitespace_and_commas(self, tmp_path):
        """Test plain integer lists"""
        path = tmp_path / "perm.txt"
        path.write_text("3 2,\n1 0\n")
        assert load_permutation(path, 4).tolist() == [3, 2, 1, 0]

    def test_not_a_bijection(self, tmp_path):
        """Test repeated destinations in a file"""
        path = tmp_path / "perm.txt"
        path.write_text("0 0 1 2")
        with pytest.raises(PermutationValidationError):
            load_permutation(path, 4)

    def test_garbage(self, tmp_path):
        """Test non-integer contents"""
        path = tmp_path / "perm.txt"
        path.write_text("zero one")
        with pytest.raises(PermutationValidationError):
            load_permutation(path, 2)

    def test_missing_file(self, tmp_path):
        """Test an unreadable file"""
        with pytest.raises(ReportIOError):
            load_permutation(tmp_path / "missing.txt", 4)
