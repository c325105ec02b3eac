export declare const version: {
    readonly major: 4;
    readonly minor: 4;
    readonly patch: number;
};
