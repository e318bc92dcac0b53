"""Default constants.

Values marked (published) are the figures reported for MER/Mars 2020 rovers;
everything else is a free parameter chosen for this simulator.

=================================  ==========  ==========================================
constant                           value       source
=================================  ==========  ==========================================
HAZCAM_FOV_DEG                     120         published hazcam field of view
NAVCAM_FOV_DEG                     45          published navcam field of view
IMU_RATE_HZ                        200         typical IMU update rate (published)
MAX_SPEED_M_PER_H                  152         Mars 2020 autonomous drive speed (published)
ONE_WAY_DELAY_S                    1200        worst-case Earth-Mars light time, 20 min (published)
WINDOWS_PER_SOL                    2           relay passes per sol (published)
LOCALIZATION_BUDGET_S              180         Opportunity location update time, 3 min (published)
SOL_LENGTH_S                       88775.244   length of a Martian solar day
CONTROL_DT_S                       1.0         simulator control cycle
=================================  ==========  ==========================================
"""

HAZCAM_FOV_DEG = 120.0
NAVCAM_FOV_DEG = 45.0
IMU_RATE_HZ = 200.0
MAX_SPEED_M_PER_H = 152.0
ONE_WAY_DELAY_S = 1200.0
WINDOWS_PER_SOL = 2
LOCALIZATION_BUDGET_S = 180.0
SOL_LENGTH_S = 88775.244
CONTROL_DT_S = 1.0

MAX_SLIP = 0.95
