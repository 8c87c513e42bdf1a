"""Emit the bundled ieee39.m / ieee118.m case files from embedded tables.

Run from the repo root:  python scripts/make_big_cases.py
Row counts are asserted before anything is written.
"""

import pathlib

OUT = pathlib.Path(__file__).resolve().parent.parent / "src" / "fdibench" / "casedata"

# --------------------------------------------------------------------------
# IEEE 39 (New England): 39 buses, 46 branches, 10 machines, slack at 31.
# --------------------------------------------------------------------------

LOADS_39 = {
    3: (322.0, 2.4), 4: (500.0, 184.0), 7: (233.8, 84.0), 8: (522.0, 176.0),
    12: (7.5, 88.0), 15: (320.0, 153.0), 16: (329.0, 32.3), 18: (158.0, 30.0),
    20: (628.0, 103.0), 21: (274.0, 115.0), 23: (247.5, 84.6), 24: (308.6, -92.0),
    25: (224.0, 47.2), 26: (139.0, 17.0), 27: (281.0, 75.5), 28: (206.0, 27.6),
    29: (283.5, 26.9), 31: (9.2, 4.6), 39: (1104.0, 250.0),
}

GENS_39 = [  # bus, Pg MW, Vg
    (30, 250.0, 1.0475), (31, 520.0, 0.9820), (32, 650.0, 0.9831),
    (33, 632.0, 0.9972), (34, 508.0, 1.0123), (35, 650.0, 1.0493),
    (36, 560.0, 1.0635), (37, 540.0, 1.0278), (38, 830.0, 1.0265),
    (39, 1000.0, 1.0300),
]

BRANCHES_39 = [  # f, t, r, x, b, ratio (0 = line)
    (1, 2, 0.0035, 0.0411, 0.6987, 0.0), (1, 39, 0.0010, 0.0250, 0.7500, 0.0),
    (2, 3, 0.0013, 0.0151, 0.2572, 0.0), (2, 25, 0.0070, 0.0086, 0.1460, 0.0),
    (3, 4, 0.0013, 0.0213, 0.2214, 0.0), (3, 18, 0.0011, 0.0133, 0.2138, 0.0),
    (4, 5, 0.0008, 0.0128, 0.1342, 0.0), (4, 14, 0.0008, 0.0129, 0.1382, 0.0),
    (5, 6, 0.0002, 0.0026, 0.0434, 0.0), (5, 8, 0.0008, 0.0112, 0.1476, 0.0),
    (6, 7, 0.0006, 0.0092, 0.1130, 0.0), (6, 11, 0.0007, 0.0082, 0.1389, 0.0),
    (7, 8, 0.0004, 0.0046, 0.0780, 0.0), (8, 9, 0.0023, 0.0363, 0.3804, 0.0),
    (9, 39, 0.0010, 0.0250, 1.2000, 0.0), (10, 11, 0.0004, 0.0043, 0.0729, 0.0),
    (10, 13, 0.0004, 0.0043, 0.0729, 0.0), (13, 14, 0.0009, 0.0101, 0.1723, 0.0),
    (14, 15, 0.0018, 0.0217, 0.3660, 0.0), (15, 16, 0.0009, 0.0094, 0.1710, 0.0),
    (16, 17, 0.0007, 0.0089, 0.1342, 0.0), (16, 19, 0.0016, 0.0195, 0.3040, 0.0),
    (16, 21, 0.0008, 0.0135, 0.2548, 0.0), (16, 24, 0.0003, 0.0059, 0.0680, 0.0),
    (17, 18, 0.0007, 0.0082, 0.1319, 0.0), (17, 27, 0.0013, 0.0173, 0.3216, 0.0),
    (21, 22, 0.0008, 0.0140, 0.2565, 0.0), (22, 23, 0.0006, 0.0096, 0.1846, 0.0),
    (23, 24, 0.0022, 0.0350, 0.3610, 0.0), (25, 26, 0.0032, 0.0323, 0.5130, 0.0),
    (26, 27, 0.0014, 0.0147, 0.2396, 0.0), (26, 28, 0.0043, 0.0474, 0.7802, 0.0),
    (26, 29, 0.0057, 0.0625, 1.0290, 0.0), (28, 29, 0.0014, 0.0151, 0.2490, 0.0),
    (12, 11, 0.0016, 0.0435, 0.0, 1.006), (12, 13, 0.0016, 0.0435, 0.0, 1.006),
    (6, 31, 0.0000, 0.0250, 0.0, 1.070), (10, 32, 0.0000, 0.0200, 0.0, 1.070),
    (19, 33, 0.0007, 0.0142, 0.0, 1.070), (20, 34, 0.0009, 0.0180, 0.0, 1.009),
    (22, 35, 0.0000, 0.0143, 0.0, 1.025), (23, 36, 0.0005, 0.0272, 0.0, 1.000),
    (25, 37, 0.0006, 0.0232, 0.0, 1.025), (2, 30, 0.0000, 0.0181, 0.0, 1.025),
    (29, 38, 0.0008, 0.0156, 0.0, 1.025), (19, 20, 0.0007, 0.0138, 0.0, 1.060),
]

# --------------------------------------------------------------------------
# IEEE 118: 118 buses, 186 branches (177 lines + 9 tap transformers),
# 54 machines (19 with positive dispatch), slack at 69.
# --------------------------------------------------------------------------

LOADS_118 = {
    1: (51, 27), 2: (20, 9), 3: (39, 10), 4: (39, 12), 6: (52, 22), 7: (19, 2),
    8: (28, 0), 11: (70, 23), 12: (47, 10), 13: (34, 16), 14: (14, 1),
    15: (90, 30), 16: (25, 10), 17: (11, 3), 18: (60, 34), 19: (45, 25),
    20: (18, 3), 21: (14, 8), 22: (10, 5), 23: (7, 3), 24: (13, 0),
    27: (71, 13), 28: (17, 7), 29: (24, 4), 31: (43, 27), 32: (59, 23),
    33: (23, 9), 34: (59, 26), 35: (33, 9), 36: (31, 17), 39: (27, 11),
    40: (66, 23), 41: (37, 10), 42: (96, 23), 43: (18, 7), 44: (16, 8),
    45: (53, 22), 46: (28, 10), 47: (34, 0), 48: (20, 11), 49: (87, 30),
    50: (17, 4), 51: (17, 8), 52: (18, 5), 53: (23, 11), 54: (113, 32),
    55: (63, 22), 56: (84, 18), 57: (12, 3), 58: (12, 3), 59: (277, 113),
    60: (78, 3), 62: (77, 14), 66: (39, 18), 67: (28, 7), 70: (66, 20),
    72: (12, 0), 73: (6, 0), 74: (68, 27), 75: (47, 11), 76: (68, 36),
    77: (61, 28), 78: (71, 26), 79: (39, 32), 80: (130, 26), 82: (54, 27),
    83: (20, 10), 84: (11, 7), 85: (24, 15), 86: (21, 10), 88: (48, 10),
    90: (163, 42), 91: (10, 0), 92: (65, 10), 93: (12, 7), 94: (30, 16),
    95: (42, 31), 96: (38, 15), 97: (15, 9), 98: (34, 8), 99: (42, 0),
    100: (37, 18), 101: (22, 15), 102: (5, 3), 103: (23, 16), 104: (38, 25),
    105: (31, 26), 106: (43, 16), 107: (50, 12), 108: (2, 1), 109: (8, 3),
    110: (39, 30), 112: (68, 13), 113: (6, 0), 114: (8, 3), 115: (22, 7),
    116: (184, 0), 117: (20, 8), 118: (33, 15),
}

SHUNTS_118 = {5: -40, 34: 14, 37: -25, 44: 10, 45: 10, 46: 10, 48: 15,
              74: 12, 79: 20, 82: 20, 83: 10, 105: 20, 107: 6, 110: 6}

GENS_118 = [  # bus, Pg MW, Vg; Pg = 0 marks a synchronous condenser
    (1, 0, 0.955), (4, 0, 0.998), (6, 0, 0.990), (8, 0, 1.015), (10, 450, 1.050),
    (12, 85, 0.990), (15, 0, 0.970), (18, 0, 0.973), (19, 0, 0.962),
    (24, 0, 0.992), (25, 220, 1.050), (26, 314, 1.015), (27, 0, 0.968),
    (31, 7, 0.967), (32, 0, 0.963), (34, 0, 0.984), (36, 0, 0.980),
    (40, 0, 0.970), (42, 0, 0.985), (46, 19, 1.005), (49, 204, 1.025),
    (54, 48, 0.955), (55, 0, 0.952), (56, 0, 0.954), (59, 155, 0.985),
    (61, 160, 0.995), (62, 0, 0.998), (65, 391, 1.005), (66, 392, 1.050),
    (69, 516.4, 1.035), (70, 0, 0.984), (72, 0, 0.980), (73, 0, 0.991),
    (74, 0, 0.958), (76, 0, 0.943), (77, 0, 1.006), (80, 477, 1.040),
    (85, 0, 0.985), (87, 4, 1.015), (89, 607, 1.005), (90, 0, 0.985),
    (91, 0, 0.980), (92, 0, 0.990), (99, 0, 1.010), (100, 252, 1.017),
    (103, 40, 1.010), (104, 0, 0.971), (105, 0, 0.965), (107, 0, 0.952),
    (110, 0, 0.973), (111, 36, 0.980), (112, 0, 0.975), (113, 0, 0.993),
    (116, 0, 1.005),
]

BRANCHES_118 = [  # f, t, r, x, b, ratio (0 = line)
    (1, 2, 0.0303, 0.0999, 0.0254, 0.0), (1, 3, 0.0129, 0.0424, 0.01082, 0.0),
    (4, 5, 0.00176, 0.00798, 0.0021, 0.0), (3, 5, 0.0241, 0.108, 0.0284, 0.0),
    (5, 6, 0.0119, 0.054, 0.01426, 0.0), (6, 7, 0.00459, 0.0208, 0.0055, 0.0),
    (8, 9, 0.00244, 0.0305, 1.162, 0.0), (8, 5, 0.0, 0.0267, 0.0, 0.985),
    (9, 10, 0.00258, 0.0322, 1.23, 0.0), (4, 11, 0.0209, 0.0688, 0.01748, 0.0),
    (5, 11, 0.0203, 0.0682, 0.01738, 0.0), (11, 12, 0.00595, 0.0196, 0.00502, 0.0),
    (2, 12, 0.0187, 0.0616, 0.01572, 0.0), (3, 12, 0.0484, 0.16, 0.0406, 0.0),
    (7, 12, 0.00862, 0.034, 0.00874, 0.0), (11, 13, 0.02225, 0.0731, 0.01876, 0.0),
    (12, 14, 0.0215, 0.0707, 0.01816, 0.0), (13, 15, 0.0744, 0.2444, 0.06268, 0.0),
    (14, 15, 0.0595, 0.195, 0.0502, 0.0), (12, 16, 0.0212, 0.0834, 0.0214, 0.0),
    (15, 17, 0.0132, 0.0437, 0.0444, 0.0), (16, 17, 0.0454, 0.1801, 0.0466, 0.0),
    (17, 18, 0.0123, 0.0505, 0.01298, 0.0), (18, 19, 0.01119, 0.0493, 0.01142, 0.0),
    (19, 20, 0.0252, 0.117, 0.0298, 0.0), (15, 19, 0.012, 0.0394, 0.0101, 0.0),
    (20, 21, 0.0183, 0.0849, 0.0216, 0.0), (21, 22, 0.0209, 0.097, 0.0246, 0.0),
    (22, 23, 0.0342, 0.159, 0.0404, 0.0), (23, 24, 0.0135, 0.0492, 0.0498, 0.0),
    (23, 25, 0.0156, 0.08, 0.0864, 0.0), (26, 25, 0.0, 0.0382, 0.0, 0.960),
    (25, 27, 0.0318, 0.163, 0.1764, 0.0), (27, 28, 0.01913, 0.0855, 0.0216, 0.0),
    (28, 29, 0.0237, 0.0943, 0.0238, 0.0), (30, 17, 0.0, 0.0388, 0.0, 0.960),
    (8, 30, 0.00431, 0.0504, 0.514, 0.0), (26, 30, 0.00799, 0.086, 0.908, 0.0),
    (17, 31, 0.0474, 0.1563, 0.0399, 0.0), (29, 31, 0.0108, 0.0331, 0.0083, 0.0),
    (23, 32, 0.0317, 0.1153, 0.1173, 0.0), (31, 32, 0.0298, 0.0985, 0.0251, 0.0),
    (27, 32, 0.0229, 0.0755, 0.01926, 0.0), (15, 33, 0.038, 0.1244, 0.03194, 0.0),
    (19, 34, 0.0752, 0.247, 0.0632, 0.0), (35, 36, 0.00224, 0.0102, 0.00268, 0.0),
    (35, 37, 0.011, 0.0497, 0.01318, 0.0), (33, 37, 0.0415, 0.142, 0.0366, 0.0),
    (34, 36, 0.00871, 0.0268, 0.00568, 0.0), (34, 37, 0.00256, 0.0094, 0.00984, 0.0),
    (38, 37, 0.0, 0.0375, 0.0, 0.935), (37, 39, 0.0321, 0.106, 0.027, 0.0),
    (37, 40, 0.0593, 0.168, 0.042, 0.0), (30, 38, 0.00464, 0.054, 0.422, 0.0),
    (39, 40, 0.0184, 0.0605, 0.01552, 0.0), (40, 41, 0.0145, 0.0487, 0.01222, 0.0),
    (40, 42, 0.0555, 0.183, 0.0466, 0.0), (41, 42, 0.041, 0.135, 0.0344, 0.0),
    (43, 44, 0.0608, 0.2454, 0.06068, 0.0), (34, 43, 0.0413, 0.1681, 0.04226, 0.0),
    (44, 45, 0.0224, 0.0901, 0.0224, 0.0), (45, 46, 0.04, 0.1356, 0.0332, 0.0),
    (46, 47, 0.038, 0.127, 0.0316, 0.0), (46, 48, 0.0601, 0.189, 0.0472, 0.0),
    (47, 49, 0.0191, 0.0625, 0.01604, 0.0), (42, 49, 0.0715, 0.323, 0.086, 0.0),
    (42, 49, 0.0715, 0.323, 0.086, 0.0), (45, 49, 0.0684, 0.186, 0.0444, 0.0),
    (48, 49, 0.0179, 0.0505, 0.01258, 0.0), (49, 50, 0.0267, 0.0752, 0.01874, 0.0),
    (49, 51, 0.0486, 0.137, 0.0342, 0.0), (51, 52, 0.0203, 0.0588, 0.01396, 0.0),
    (52, 53, 0.0405, 0.1635, 0.04058, 0.0), (53, 54, 0.0263, 0.122, 0.031, 0.0),
    (49, 54, 0.073, 0.289, 0.0738, 0.0), (49, 54, 0.0869, 0.291, 0.073, 0.0),
    (54, 55, 0.0169, 0.0707, 0.0202, 0.0), (54, 56, 0.00275, 0.00955, 0.00732, 0.0),
    (55, 56, 0.00488, 0.0151, 0.00374, 0.0), (56, 57, 0.0343, 0.0966, 0.0242, 0.0),
    (50, 57, 0.0474, 0.134, 0.0332, 0.0), (56, 58, 0.0343, 0.0966, 0.0242, 0.0),
    (51, 58, 0.0255, 0.0719, 0.01788, 0.0), (54, 59, 0.0503, 0.2293, 0.0598, 0.0),
    (56, 59, 0.0825, 0.251, 0.0569, 0.0), (56, 59, 0.0803, 0.239, 0.0536, 0.0),
    (55, 59, 0.04739, 0.2158, 0.05646, 0.0), (59, 60, 0.0317, 0.145, 0.0376, 0.0),
    (59, 61, 0.0328, 0.15, 0.0388, 0.0), (60, 61, 0.00264, 0.0135, 0.01456, 0.0),
    (60, 62, 0.0123, 0.0561, 0.01468, 0.0), (61, 62, 0.00824, 0.0376, 0.0098, 0.0),
    (63, 59, 0.0, 0.0386, 0.0, 0.960), (63, 64, 0.00172, 0.02, 0.216, 0.0),
    (64, 61, 0.0, 0.0268, 0.0, 0.985), (38, 65, 0.00901, 0.0986, 1.046, 0.0),
    (64, 65, 0.00269, 0.0302, 0.38, 0.0), (49, 66, 0.018, 0.0919, 0.0248, 0.0),
    (49, 66, 0.018, 0.0919, 0.0248, 0.0), (62, 66, 0.0482, 0.218, 0.0578, 0.0),
    (62, 67, 0.0258, 0.117, 0.031, 0.0), (65, 66, 0.0, 0.037, 0.0, 0.935),
    (66, 67, 0.0224, 0.1015, 0.02682, 0.0), (65, 68, 0.00138, 0.016, 0.638, 0.0),
    (47, 69, 0.0844, 0.2778, 0.07092, 0.0), (49, 69, 0.0985, 0.324, 0.0828, 0.0),
    (68, 69, 0.0, 0.037, 0.0, 0.935), (69, 70, 0.03, 0.127, 0.122, 0.0),
    (24, 70, 0.00221, 0.4115, 0.10198, 0.0), (70, 71, 0.00882, 0.0355, 0.00878, 0.0),
    (24, 72, 0.0488, 0.196, 0.0488, 0.0), (71, 72, 0.0446, 0.18, 0.04444, 0.0),
    (71, 73, 0.00866, 0.0454, 0.01178, 0.0), (70, 74, 0.0401, 0.1323, 0.03368, 0.0),
    (70, 75, 0.0428, 0.141, 0.036, 0.0), (69, 75, 0.0405, 0.122, 0.124, 0.0),
    (74, 75, 0.0123, 0.0406, 0.01034, 0.0), (76, 77, 0.0444, 0.148, 0.0368, 0.0),
    (69, 77, 0.0309, 0.101, 0.1038, 0.0), (75, 77, 0.0601, 0.1999, 0.04978, 0.0),
    (77, 78, 0.00376, 0.0124, 0.01264, 0.0), (78, 79, 0.00546, 0.0244, 0.00648, 0.0),
    (77, 80, 0.017, 0.0485, 0.0472, 0.0), (77, 80, 0.0294, 0.105, 0.0228, 0.0),
    (79, 80, 0.0156, 0.0704, 0.0187, 0.0), (68, 81, 0.00175, 0.0202, 0.808, 0.0),
    (81, 80, 0.0, 0.037, 0.0, 0.935), (77, 82, 0.0298, 0.0853, 0.08174, 0.0),
    (82, 83, 0.0112, 0.03665, 0.03796, 0.0), (83, 84, 0.0625, 0.132, 0.0258, 0.0),
    (83, 85, 0.043, 0.148, 0.0348, 0.0), (84, 85, 0.0302, 0.0641, 0.01234, 0.0),
    (85, 86, 0.035, 0.123, 0.0276, 0.0), (86, 87, 0.02828, 0.2074, 0.0445, 0.0),
    (85, 88, 0.02, 0.102, 0.0276, 0.0), (85, 89, 0.0239, 0.173, 0.047, 0.0),
    (88, 89, 0.0139, 0.0712, 0.01934, 0.0), (89, 90, 0.0518, 0.188, 0.0528, 0.0),
    (89, 90, 0.0238, 0.0997, 0.106, 0.0), (90, 91, 0.0254, 0.0836, 0.0214, 0.0),
    (89, 92, 0.0099, 0.0505, 0.0548, 0.0), (89, 92, 0.0393, 0.1581, 0.0414, 0.0),
    (91, 92, 0.0387, 0.1272, 0.03268, 0.0), (92, 93, 0.0258, 0.0848, 0.0218, 0.0),
    (92, 94, 0.0481, 0.158, 0.0406, 0.0), (93, 94, 0.0223, 0.0732, 0.01876, 0.0),
    (94, 95, 0.0132, 0.0434, 0.0111, 0.0), (80, 96, 0.0356, 0.182, 0.0494, 0.0),
    (82, 96, 0.0162, 0.053, 0.0544, 0.0), (94, 96, 0.0269, 0.0869, 0.023, 0.0),
    (80, 97, 0.0183, 0.0934, 0.0254, 0.0), (80, 98, 0.0238, 0.108, 0.0286, 0.0),
    (80, 99, 0.0454, 0.206, 0.0546, 0.0), (92, 100, 0.0648, 0.295, 0.0472, 0.0),
    (94, 100, 0.0178, 0.058, 0.0604, 0.0), (95, 96, 0.0171, 0.0547, 0.01474, 0.0),
    (96, 97, 0.0173, 0.0885, 0.024, 0.0), (98, 100, 0.0397, 0.179, 0.0476, 0.0),
    (99, 100, 0.018, 0.0813, 0.0216, 0.0), (100, 101, 0.0277, 0.1262, 0.0328, 0.0),
    (92, 102, 0.0123, 0.0559, 0.01464, 0.0), (101, 102, 0.0246, 0.112, 0.0294, 0.0),
    (100, 103, 0.016, 0.0525, 0.0536, 0.0), (100, 104, 0.0451, 0.204, 0.0541, 0.0),
    (103, 104, 0.0466, 0.1584, 0.0407, 0.0), (103, 105, 0.0535, 0.1625, 0.0408, 0.0),
    (100, 106, 0.0605, 0.229, 0.062, 0.0), (104, 105, 0.00994, 0.0378, 0.00986, 0.0),
    (105, 106, 0.014, 0.0547, 0.01434, 0.0), (105, 107, 0.053, 0.183, 0.0472, 0.0),
    (105, 108, 0.0261, 0.0703, 0.01844, 0.0), (106, 107, 0.053, 0.183, 0.0472, 0.0),
    (108, 109, 0.0105, 0.0288, 0.0076, 0.0), (103, 110, 0.03906, 0.1813, 0.0461, 0.0),
    (109, 110, 0.0278, 0.0762, 0.0202, 0.0), (110, 111, 0.022, 0.0755, 0.02, 0.0),
    (110, 112, 0.0247, 0.064, 0.062, 0.0), (17, 113, 0.00913, 0.0301, 0.00768, 0.0),
    (32, 113, 0.0615, 0.203, 0.0518, 0.0), (32, 114, 0.0135, 0.0612, 0.01628, 0.0),
    (27, 115, 0.0164, 0.0741, 0.01972, 0.0), (114, 115, 0.0023, 0.0104, 0.00276, 0.0),
    (68, 116, 0.00034, 0.00405, 0.164, 0.0), (12, 117, 0.0329, 0.14, 0.0358, 0.0),
    (75, 118, 0.0145, 0.0481, 0.01198, 0.0), (76, 118, 0.0164, 0.0544, 0.01356, 0.0),
]


def emit(name, n_bus, slack, loads, shunts, gens, branches):
    gen_buses = {g[0] for g in gens}
    vg = {g[0]: g[2] for g in gens}
    lines = [f"function mpc = {name}", "mpc.version = '2';", "mpc.baseMVA = 100;", "", "mpc.bus = ["]
    for b in range(1, n_bus + 1):
        btype = 3 if b == slack else (2 if b in gen_buses else 1)
        pd, qd = loads.get(b, (0.0, 0.0))
        gs, bs = 0.0, float(shunts.get(b, 0.0))
        vm = vg.get(b, 1.0)
        lines.append(f"\t{b}\t{btype}\t{pd}\t{qd}\t{gs}\t{bs}\t1\t{vm}\t0\t345\t1\t1.10\t0.90;")
    lines.append("];")
    lines.append("")
    lines.append("mpc.gen = [")
    for bus, pg, v in gens:
        lines.append(f"\t{bus}\t{pg}\t0\t9999\t-9999\t{v}\t100\t1\t9999\t0;")
    lines.append("];")
    lines.append("")
    lines.append("mpc.branch = [")
    for f, t, r, x, bb, ratio in branches:
        lines.append(f"\t{f}\t{t}\t{r}\t{x}\t{bb}\t0\t0\t0\t{ratio}\t0\t1\t-360\t360;")
    lines.append("];")
    (OUT / f"{name}.m").write_text("\n".join(lines) + "\n")
    print(f"{name}: {n_bus} buses, {len(branches)} branches, {len(gens)} machines")


def main():
    assert len(BRANCHES_39) == 46, len(BRANCHES_39)
    assert len(GENS_39) == 10
    assert len(BRANCHES_118) == 186, len(BRANCHES_118)
    assert len(GENS_118) == 54, len(GENS_118)
    assert sum(1 for g in GENS_118 if g[1] > 0) == 19
    assert sum(1 for br in BRANCHES_118 if br[5] != 0.0) == 9
    emit("ieee39", 39, 31, LOADS_39, {}, GENS_39, BRANCHES_39)
    emit("ieee118", 118, 69, LOADS_118, SHUNTS_118, GENS_118, BRANCHES_118)


if __name__ == "__main__":
    main()
