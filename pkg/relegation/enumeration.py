import numpy as np

from .errors import ParameterError, ResourceError

DEFAULT_BUDGET = 2_000_000


def generate_vectors(n, radius):

    '''
        Generate all the integer vectors of length n whose entries lie in [-radius, radius]

        Input variables:
            + n:        the length of the vectors (number of angles)
            + radius:   the largest absolute value of an entry

        Output variable:
            + vector_list: the list of all the possible vectors, lexicographic order

        Example:
            + Input: n = 2, radius = 1
            + Output: [[-1, -1], [-1, 0], [-1, 1], [0, -1], [0, 0], [0, 1], [1, -1], [1, 0], [1, 1]]
    '''

    if n <= 0:
        return [[]]                                         # return an empty vector

    if n == 1:
        return [[i] for i in range(-radius, radius + 1)]    # generate the 1-entry vectors

    # recursion
    smaller_vectors = generate_vectors(n - 1, radius)
    vector_list = []
    for entry in range(-radius, radius + 1):
        for smaller_vector in smaller_vectors:
            vector_list.append([entry] + smaller_vector)

    return vector_list


def check_budget(n, radius, budget=DEFAULT_BUDGET):
    """
        Refuse an enumeration whose bounding box holds more than `budget` points.
    """
    if radius < 0:
        raise ParameterError(f"enumeration radius must be non-negative, got {radius}")
    box = (2 * radius + 1) ** n
    if box > budget:
        raise ResourceError(
            f"enumeration of the l1 ball of radius {radius} in dimension {n} needs {box} "
            f"points, budget is {budget}"
        )
    return box


def l1_ball(n, radius, budget=DEFAULT_BUDGET, include_zero=False):

    '''
        All integer vectors k with |k|_1 <= radius, as an (N, n) integer array.

        Input variables:
            + n:            [int]   the number of angles
            + radius:       [int]   the l1 radius
            + budget:       [int]   the largest admissible bounding box
            + include_zero: [bool]  whether the zero vector is kept

        Output variable:
            + points:       [array] the lattice points, lexicographic order
    '''

    check_budget(n, radius, budget)
    if n == 0:
        return np.zeros((1 if include_zero else 0, 0), dtype=np.int64)
    points = np.asarray(generate_vectors(n, radius), dtype=np.int64).reshape(-1, n)
    norms = np.abs(points).sum(axis=1)
    keep = norms <= radius
    if not include_zero:
        keep &= norms > 0
    return points[keep]


def l1_shell(n, size):

    '''
        All integer vectors k with |k|_1 == size, built entry by entry (no bounding box).

        Input variables:
            + n:    [int]   the number of angles
            + size: [int]   the exact l1 norm

        Output variable:
            + shell_list: [list] the vectors of the shell
    '''

    if n == 0:
        return [[]] if size == 0 else []
    if n == 1:
        return [[0]] if size == 0 else [[-size], [size]]

    shell_list = []
    for first in range(-size, size + 1):
        for rest in l1_shell(n - 1, size - abs(first)):
            shell_list.append([first] + rest)
    return shell_list


def l1_shells(n, radius, budget=DEFAULT_BUDGET):
    """
        Yield (size, shell) for size = 1..radius; the same point set as `l1_ball`, enumerated by shells.
    """
    check_budget(n, radius, budget)
    for size in range(1, radius + 1):
        yield size, np.asarray(l1_shell(n, size), dtype=np.int64).reshape(-1, n)
