// User speech capture: browser speech recognition when available, a text
// input fallback otherwise (or when the microphone is denied). Either way
// the output is the same ordered stream: interim speech events followed by
// an end-of-speech marker.

export interface CaptureEvents {
  onSpeech: (text: string) => void;
  onEndOfSpeech: () => void;
  onFallback?: () => void;
}

interface RecognitionLike {
  continuous: boolean;
  interimResults: boolean;
  onresult: ((event: RecognitionResultEvent) => void) | null;
  onend: (() => void) | null;
  onerror: ((event: unknown) => void) | null;
  start(): void;
  stop(): void;
}

export interface RecognitionResultEvent {
  resultIndex: number;
  results: Array<{ isFinal: boolean; 0: { transcript: string } }>;
}

export type RecognitionFactory = () => RecognitionLike | null;

function defaultRecognitionFactory(): RecognitionLike | null {
  const w = globalThis as Record<string, unknown>;
  const ctor = (w.SpeechRecognition ?? w.webkitSpeechRecognition) as
    | (new () => RecognitionLike)
    | undefined;
  return ctor ? new ctor() : null;
}

export class SpeechCapture {
  private events: CaptureEvents;
  private factory: RecognitionFactory;
  private recognition: RecognitionLike | null = null;
  fallbackActive = false;

  constructor(events: CaptureEvents, factory: RecognitionFactory = defaultRecognitionFactory) {
    this.events = events;
    this.factory = factory;
  }

  /** Begin one listening turn. Returns false when the text fallback is in charge. */
  start(): boolean {
    let recognition: RecognitionLike | null = null;
    try {
      recognition = this.factory();
    } catch {
      recognition = null;
    }
    if (!recognition) {
      this.fallbackActive = true;
      this.events.onFallback?.();
      return false;
    }
    this.recognition = recognition;
    recognition.continuous = true;
    recognition.interimResults = true;
    let delivered = 0;
    recognition.onresult = (event) => {
      for (let i = event.resultIndex; i < event.results.length; i += 1) {
        const text = event.results[i][0].transcript.trim();
        if (!text) continue;
        // forward only the not-yet-delivered tail so word order is stable
        const fresh = text.split(/\s+/).slice(delivered).join(" ");
        if (event.results[i].isFinal) {
          delivered = 0;
          if (fresh) this.events.onSpeech(fresh);
        } else if (fresh) {
          delivered += fresh.split(/\s+/).length;
          this.events.onSpeech(fresh);
        }
      }
    };
    recognition.onend = () => {
      this.events.onEndOfSpeech();
    };
    recognition.onerror = () => {
      this.fallbackActive = true;
      this.events.onFallback?.();
    };
    recognition.start();
    return true;
  }

  stop(): void {
    this.recognition?.stop();
  }

  /** Text fallback: one submission is a whole turn. */
  submitText(text: string): void {
    const trimmed = text.trim();
    if (trimmed) {
      this.events.onSpeech(trimmed);
    }
    this.events.onEndOfSpeech();
  }
}
