#!/usr/bin/env python
#
# A toolkit for robust optimization of expensive black-box functions over discrete spaces
# Copyright (C) 2024-2026
# The atmkit developers
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU Lesser Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU Lesser Public License for more details.
#
# You should have received a copy of the GNU Lesser Public License
# along with this program.  If not, see [http://www.gnu.org/licenses/].
"""This module contains small finite field and Hadamard matrix helpers for the OA
constructions."""
import math
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

# Monic irreducible polynomials over GF(p), coefficients from the constant term upwards.
_IRREDUCIBLE: Dict[int, Tuple[int, ...]] = {
    4: (1, 1, 1),
    8: (1, 1, 0, 1),
    9: (1, 0, 1),
}

# Primitive polynomials over GF(2) as bit masks, indexed by degree.
_PRIMITIVE_BINARY: Dict[int, int] = {
    2: 0b111,
    3: 0b1011,
    4: 0b10011,
    5: 0b100101,
    6: 0b1000011,
    7: 0b10000011,
    8: 0b100011101,
    9: 0b1000010001,
    10: 0b10000001001,
    11: 0b100000000101,
    12: 0b1000001010011,
}


def prime_power(order: int) -> Optional[Tuple[int, int]]:
    """Returns ``(p, m)`` with ``order == p**m`` for a prime ``p``, else ``None``."""
    if order < 2:
        return None
    for base in range(2, math.isqrt(order) + 1):
        if order % base == 0:
            exponent = 0
            rest = order
            while rest % base == 0:
                rest //= base
                exponent += 1
            return (base, exponent) if rest == 1 else None
    return order, 1


def is_prime(number: int) -> bool:
    """Tells whether ``number`` is prime."""
    power = prime_power(number)
    return power is not None and power[1] == 1


class GaloisField:
    """Addition and multiplication tables of GF(q).

    Elements are the integers ``0..q-1``; for ``q = p**m`` the base-``p`` digits of an
    element are the coefficients of its polynomial representative. ``0`` and ``1`` are
    the additive and multiplicative identities.

    Args:
        order (:obj:`int`): The field size ``q``, a prime power with a known polynomial.

    Raises:
        ValueError: If no field of that size is available.
    """

    __slots__ = ("order", "characteristic", "degree", "add", "mul")

    def __init__(self, order: int):
        power = prime_power(order)
        if power is None:
            raise ValueError(f"{order} is not a prime power")
        if power[1] > 1 and order not in _IRREDUCIBLE:
            raise ValueError(f"No irreducible polynomial known for GF({order})")
        self.order = order
        self.characteristic, self.degree = power
        elements = np.arange(order)
        digits = np.array([self._digits(value) for value in elements])
        sums = (digits[:, None, :] + digits[None, :, :]) % self.characteristic
        self.add = self._from_digits(sums)
        self.mul = np.array(
            [[self._multiply(a, b) for b in range(order)] for a in range(order)], dtype=np.int64
        )

    def _digits(self, value: int) -> List[int]:
        digits = []
        for _ in range(self.degree):
            digits.append(value % self.characteristic)
            value //= self.characteristic
        return digits

    def _from_digits(self, digits: np.ndarray) -> np.ndarray:
        weights = self.characteristic ** np.arange(self.degree)
        return (digits * weights).sum(axis=-1).astype(np.int64)

    def _multiply(self, a: int, b: int) -> int:
        p, m = self.characteristic, self.degree
        if m == 1:
            return (a * b) % p
        left, right = self._digits(a), self._digits(b)
        product = [0] * (2 * m - 1)
        for i, x in enumerate(left):
            for j, y in enumerate(right):
                product[i + j] = (product[i + j] + x * y) % p
        modulus = _IRREDUCIBLE[self.order]
        for degree in range(2 * m - 2, m - 1, -1):
            coefficient = product[degree]
            if coefficient:
                for offset, term in enumerate(modulus):
                    position = degree - m + offset
                    product[position] = (product[position] - coefficient * term) % p
        return int(sum(c * p**i for i, c in enumerate(product[:m])))


@lru_cache(maxsize=None)
def galois_field(order: int) -> GaloisField:
    """Cached :class:`GaloisField` instances."""
    return GaloisField(order)


def gf2_multiply(a: int, b: int, degree: int) -> int:
    """Multiplies two elements of GF(2**degree) given as bit masks."""
    modulus = _PRIMITIVE_BINARY[degree]
    result = 0
    while b:
        if b & 1:
            result ^= a
        b >>= 1
        a <<= 1
        if a >> degree & 1:
            a ^= modulus
    return result


def gf2_power(a: int, exponent: int, degree: int) -> int:
    """Raises an element of GF(2**degree) to a nonnegative integer power."""
    result = 1
    while exponent:
        if exponent & 1:
            result = gf2_multiply(result, a, degree)
        a = gf2_multiply(a, a, degree)
        exponent >>= 1
    return result


def max_binary_degree() -> int:
    """Largest ``k`` for which GF(2**k) arithmetic is available."""
    return max(_PRIMITIVE_BINARY)


def _quadratic_character(q: int) -> np.ndarray:
    residues = {(i * i) % q for i in range(1, q)}
    return np.array([0] + [1 if a in residues else -1 for a in range(1, q)], dtype=np.int64)


def _jacobsthal(q: int) -> np.ndarray:
    chi = _quadratic_character(q)
    index = np.arange(q)
    return chi[(index[None, :] - index[:, None]) % q]


def paley_order_supported(order: int) -> bool:
    """Tells whether :func:`paley_hadamard` can build a matrix of this order."""
    if order < 4 or order % 4:
        return False
    if is_prime(order - 1) and (order - 1) % 4 == 3:
        return True
    half = order // 2 - 1
    return is_prime(half) and half % 4 == 1


def paley_hadamard(order: int) -> np.ndarray:
    """A Hadamard matrix of the given order from a Paley construction.

    Type I is used for ``order - 1`` a prime congruent to 3 mod 4, type II for
    ``order / 2 - 1`` a prime congruent to 1 mod 4.

    Raises:
        ValueError: If neither construction applies.
    """
    if not paley_order_supported(order):
        raise ValueError(f"No Paley construction for order {order}")
    if is_prime(order - 1) and (order - 1) % 4 == 3:
        q = order - 1
        skew = np.zeros((order, order), dtype=np.int64)
        skew[0, 1:] = 1
        skew[1:, 0] = -1
        skew[1:, 1:] = _jacobsthal(q)
        return np.eye(order, dtype=np.int64) + skew
    q = order // 2 - 1
    conference = np.zeros((q + 1, q + 1), dtype=np.int64)
    conference[0, 1:] = 1
    conference[1:, 0] = 1
    conference[1:, 1:] = _jacobsthal(q)
    plus = np.array([[1, 1], [1, -1]], dtype=np.int64)
    zero = np.array([[1, -1], [-1, -1]], dtype=np.int64)
    return np.kron(conference, plus) + np.kron(np.eye(q + 1, dtype=np.int64), zero)
