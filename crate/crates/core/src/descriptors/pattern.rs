//! Frozen BRIEF sampling pattern: 256 point pairs `(x1, y1, x2, y2)` in a
//! 32×32 patch, drawn once from an isotropic Gaussian (σ = 32/5) around the
//! patch center. Changing it changes every binary descriptor.

pub(crate) const PATTERN: [[u8; 4]; 256] = [
    [15, 24, 14, 14],
    [10, 22, 17, 9],
    [17, 12, 22, 9],
    [17, 21, 11, 12],
    [6, 14, 11, 16],
    [9, 15, 12, 11],
    [18, 15, 23, 11],
    [15, 14, 11, 20],
    [20, 15, 23, 15],
    [20, 18, 15, 7],
    [13, 17, 14, 12],
    [13, 16, 20, 10],
    [14, 12, 13, 12],
    [21, 26, 15, 17],
    [7, 8, 21, 8],
    [10, 6, 13, 9],
    [19, 13, 10, 25],
    [13, 19, 21, 8],
    [10, 20, 18, 6],
    [10, 8, 11, 10],
    [11, 21, 10, 14],
    [15, 9, 22, 19],
    [10, 9, 20, 14],
    [24, 19, 12, 21],
    [10, 20, 16, 11],
    [22, 10, 11, 8],
    [12, 4, 11, 10],
    [22, 9, 21, 19],
    [11, 1, 11, 14],
    [21, 13, 14, 18],
    [23, 17, 20, 29],
    [19, 21, 19, 20],
    [9, 27, 15, 14],
    [5, 13, 17, 25],
    [11, 20, 24, 17],
    [17, 18, 17, 19],
    [15, 14, 19, 9],
    [27, 18, 17, 17],
    [23, 14, 12, 18],
    [18, 17, 17, 16],
    [27, 17, 12, 11],
    [12, 13, 1, 18],
    [14, 21, 15, 12],
    [15, 18, 20, 17],
    [15, 5, 14, 0],
    [20, 17, 22, 15],
    [17, 8, 13, 17],
    [5, 7, 17, 13],
    [17, 13, 11, 15],
    [18, 8, 13, 14],
    [6, 9, 19, 1],
    [11, 14, 18, 20],
    [12, 27, 15, 21],
    [22, 16, 8, 8],
    [23, 10, 10, 15],
    [18, 19, 9, 25],
    [15, 10, 15, 14],
    [23, 2, 18, 13],
    [23, 16, 13, 7],
    [16, 19, 0, 22],
    [12, 29, 13, 10],
    [20, 12, 15, 16],
    [9, 10, 15, 12],
    [19, 10, 26, 23],
    [6, 18, 12, 17],
    [15, 18, 30, 22],
    [16, 7, 10, 17],
    [17, 23, 20, 13],
    [9, 16, 28, 14],
    [16, 18, 16, 17],
    [17, 12, 15, 18],
    [18, 23, 24, 14],
    [19, 15, 12, 15],
    [19, 17, 24, 10],
    [24, 18, 13, 13],
    [23, 14, 18, 14],
    [18, 16, 13, 24],
    [27, 17, 22, 20],
    [12, 17, 1, 0],
    [21, 12, 10, 14],
    [14, 12, 0, 10],
    [10, 16, 22, 0],
    [26, 14, 21, 31],
    [12, 10, 21, 14],
    [14, 27, 10, 3],
    [0, 14, 24, 11],
    [12, 25, 8, 15],
    [0, 26, 15, 13],
    [11, 11, 17, 14],
    [2, 27, 14, 21],
    [18, 9, 8, 22],
    [11, 11, 10, 19],
    [19, 16, 9, 16],
    [10, 19, 8, 18],
    [9, 20, 12, 7],
    [17, 27, 12, 30],
    [14, 10, 20, 25],
    [4, 4, 14, 22],
    [2, 17, 20, 23],
    [7, 10, 22, 15],
    [14, 14, 25, 9],
    [15, 20, 6, 31],
    [10, 15, 15, 10],
    [14, 21, 1, 13],
    [17, 26, 19, 20],
    [10, 0, 18, 17],
    [14, 10, 23, 13],
    [18, 9, 17, 10],
    [9, 14, 22, 14],
    [9, 24, 23, 17],
    [14, 14, 11, 16],
    [8, 9, 9, 16],
    [27, 11, 21, 22],
    [10, 14, 19, 20],
    [16, 20, 9, 17],
    [14, 6, 9, 9],
    [8, 23, 19, 15],
    [18, 6, 2, 10],
    [15, 10, 6, 13],
    [7, 12, 6, 23],
    [9, 22, 15, 6],
    [7, 18, 14, 12],
    [22, 9, 5, 14],
    [25, 23, 1, 17],
    [10, 16, 27, 23],
    [3, 10, 18, 8],
    [26, 22, 23, 14],
    [22, 16, 21, 10],
    [20, 20, 19, 10],
    [31, 10, 10, 17],
    [11, 0, 2, 19],
    [28, 7, 15, 16],
    [17, 18, 22, 28],
    [3, 16, 23, 13],
    [30, 11, 14, 14],
    [23, 13, 13, 14],
    [19, 15, 14, 7],
    [17, 13, 6, 7],
    [13, 10, 6, 23],
    [26, 9, 8, 19],
    [12, 15, 10, 17],
    [14, 30, 20, 15],
    [8, 17, 0, 16],
    [11, 15, 21, 17],
    [15, 12, 18, 16],
    [15, 19, 23, 13],
    [26, 15, 9, 24],
    [7, 17, 19, 23],
    [20, 25, 7, 13],
    [17, 20, 31, 24],
    [18, 12, 21, 12],
    [31, 21, 23, 6],
    [16, 16, 0, 16],
    [23, 14, 9, 18],
    [11, 11, 20, 20],
    [16, 21, 14, 8],
    [16, 15, 19, 12],
    [0, 13, 5, 21],
    [23, 12, 20, 22],
    [22, 4, 27, 18],
    [4, 3, 11, 12],
    [15, 19, 11, 12],
    [4, 12, 22, 5],
    [11, 27, 11, 17],
    [27, 14, 13, 14],
    [27, 14, 11, 22],
    [21, 15, 10, 27],
    [15, 11, 20, 20],
    [0, 7, 21, 18],
    [8, 6, 8, 10],
    [12, 12, 7, 15],
    [25, 7, 21, 15],
    [15, 27, 19, 19],
    [17, 20, 9, 11],
    [19, 10, 23, 21],
    [19, 8, 6, 17],
    [21, 4, 16, 23],
    [13, 8, 20, 17],
    [3, 14, 10, 14],
    [14, 16, 0, 17],
    [15, 15, 11, 8],
    [13, 15, 18, 12],
    [20, 12, 25, 13],
    [24, 24, 14, 16],
    [18, 8, 18, 15],
    [11, 11, 15, 26],
    [11, 22, 9, 11],
    [21, 22, 12, 10],
    [11, 13, 8, 16],
    [3, 11, 17, 12],
    [22, 14, 18, 14],
    [12, 28, 5, 16],
    [13, 19, 10, 16],
    [13, 8, 12, 17],
    [25, 28, 26, 11],
    [14, 16, 11, 4],
    [24, 11, 13, 26],
    [11, 17, 18, 4],
    [25, 30, 11, 29],
    [7, 0, 16, 21],
    [27, 16, 11, 12],
    [13, 19, 12, 12],
    [13, 15, 8, 15],
    [25, 22, 18, 12],
    [16, 9, 17, 17],
    [7, 27, 16, 11],
    [1, 17, 11, 17],
    [21, 23, 14, 23],
    [16, 21, 21, 7],
    [12, 31, 22, 14],
    [6, 12, 8, 21],
    [15, 12, 17, 11],
    [25, 13, 6, 3],
    [19, 11, 11, 24],
    [19, 11, 11, 9],
    [21, 21, 9, 25],
    [11, 8, 17, 29],
    [11, 17, 18, 15],
    [13, 22, 25, 9],
    [19, 7, 9, 11],
    [20, 12, 23, 15],
    [17, 12, 13, 16],
    [20, 16, 22, 19],
    [22, 20, 16, 21],
    [25, 16, 11, 19],
    [15, 11, 14, 7],
    [23, 25, 20, 14],
    [6, 11, 17, 11],
    [0, 20, 22, 11],
    [16, 15, 16, 14],
    [22, 31, 15, 26],
    [28, 19, 15, 20],
    [13, 9, 13, 7],
    [12, 10, 11, 18],
    [19, 15, 19, 4],
    [19, 10, 17, 16],
    [22, 12, 21, 18],
    [25, 11, 15, 16],
    [4, 9, 27, 17],
    [10, 19, 20, 20],
    [14, 19, 25, 11],
    [19, 8, 8, 22],
    [15, 10, 16, 12],
    [15, 26, 15, 14],
    [19, 17, 11, 9],
    [9, 7, 17, 12],
    [16, 13, 20, 17],
    [12, 8, 9, 26],
    [10, 11, 11, 13],
    [13, 12, 15, 9],
    [24, 8, 17, 14],
    [22, 13, 15, 12],
    [21, 5, 20, 10],
    [30, 21, 12, 19],
    [4, 9, 13, 8],
    [5, 13, 13, 13],
];
