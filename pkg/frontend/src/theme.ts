// Visual layout constants for the 8-element face. The geometry is a theme
// choice: round eyes spaced symmetrically, a rectangular upper eyelid and an
// elliptical lower one parked just off each eye, and a rounded mouth low on
// the face. Sizes are in vmin so the face scales with the viewport.

export const theme = {
  faceSizeVmin: 100,

  eyeSizeVmin: 18,
  leftEyeCenter: { xPct: 30, yPct: 38 },
  rightEyeCenter: { xPct: 70, yPct: 38 },

  upperEyelid: { widthVmin: 22, heightVmin: 13 }, // rectangle
  lowerEyelid: { widthVmin: 22, heightVmin: 11 }, // ellipse
  eyelidGapVmin: 0.5,

  mouthCenter: { xPct: 50, yPct: 74 },

  speaking: {
    frequencyHz: 4,
    amplitudeVmin: 1.5,
    minHeightVmin: 0.5,
    maxHeightVmin: 12,
  },
} as const;
